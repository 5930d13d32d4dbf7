"""Directed road network: topology, arc-length geometry, path distance, visual fields.

Edges are parametrized by arc length along their orientation; a point on the
network is an (edge, offset) pair. All distances respect the orientation:
``path_distance(x, y)`` is finite only if y can be reached driving downstream
from x.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

from .errors import ConstraintError, ValidationError

UNREACHABLE = float("inf")


@dataclass(frozen=True)
class Edge:
    """A directed road segment of positive length."""

    id: int
    name: str
    tail: str
    head: str
    length: float
    is_terminal: bool = False


@dataclass(frozen=True)
class EdgePoint:
    """Point on the network: arc-length offset along an edge's orientation."""

    edge: int
    offset: float


class Network:
    """Immutable directed network with vertex classification.

    Vertices are split into sources (no incoming edge), sinks (no outgoing
    edge) and junctions (both). ``min_edge_length`` bounds the admissible
    interaction radii: a visual field never spans more than one junction.
    """

    def __init__(self, edges: list[Edge]):
        self.edges = edges
        self.name_to_id = {}
        for e in edges:
            if e.name in self.name_to_id:
                raise ValidationError(f"duplicate edge id {e.name!r}")
            self.name_to_id[e.name] = e.id

        self.vertices = []
        seen = set()
        for e in edges:
            for v in (e.tail, e.head):
                if v not in seen:
                    seen.add(v)
                    self.vertices.append(v)

        self.inc = {v: [] for v in self.vertices}
        self.out = {v: [] for v in self.vertices}
        for e in edges:
            self.out[e.tail].append(e.id)
            self.inc[e.head].append(e.id)

        self.sources = frozenset(v for v in self.vertices if not self.inc[v])
        self.sinks = frozenset(v for v in self.vertices if not self.out[v])
        self.junctions = frozenset(
            v for v in self.vertices if self.inc[v] and self.out[v]
        )
        self.min_edge_length = min(e.length for e in edges)

    def edge(self, edge_id: int) -> Edge:
        return self.edges[edge_id]

    def edge_by_name(self, name: str) -> Edge:
        try:
            return self.edges[self.name_to_id[name]]
        except KeyError:
            raise ValidationError(f"unknown edge {name!r}") from None

    def outgoing(self, vertex: str) -> list[int]:
        return self.out[vertex]

    def incoming(self, vertex: str) -> list[int]:
        return self.inc[vertex]

    def __repr__(self):
        return (
            f"Network({len(self.edges)} edges, {len(self.vertices)} vertices, "
            f"sources={sorted(self.sources)}, junctions={sorted(self.junctions)}, "
            f"sinks={sorted(self.sinks)})"
        )


def build_network(edge_list) -> Network:
    """Build a validated :class:`Network` from edge definitions.

    Each entry is ``(name, tail, head, length)`` optionally followed by a
    terminal flag marking a truncated stand-in for an infinite outbound road.

    Raises :class:`ValidationError` for duplicate names, self-loops or
    non-positive lengths, naming the offending edge.
    """
    if not edge_list:
        raise ValidationError("edge list is empty")
    edges = []
    for idx, item in enumerate(edge_list):
        item = tuple(item)
        if len(item) == 4:
            name, tail, head, length = item
            terminal = False
        elif len(item) == 5:
            name, tail, head, length, terminal = item
        else:
            raise ValidationError(
                f"edge #{idx}: expected (name, tail, head, length[, terminal])"
            )
        name, tail, head = str(name), str(tail), str(head)
        length = float(length)
        if tail == head:
            raise ValidationError(f"edge {name!r}: self-loop at vertex {tail!r}")
        if not length > 0:
            raise ValidationError(f"edge {name!r}: length must be positive, got {length}")
        edges.append(Edge(idx, name, tail, head, length, bool(terminal)))
    return Network(edges)


def _check_point(net: Network, p: EdgePoint) -> Edge:
    if not 0 <= p.edge < len(net.edges):
        raise ValidationError(f"invalid edge id {p.edge}")
    e = net.edges[p.edge]
    if not 0.0 <= p.offset <= e.length:
        raise ValidationError(
            f"offset {p.offset} outside [0, {e.length}] on edge {e.name!r}"
        )
    return e


def vertex_distances(net: Network, start_vertex: str) -> dict[str, float]:
    """Shortest downstream distance from ``start_vertex`` to every vertex."""
    dist = {start_vertex: 0.0}
    heap = [(0.0, start_vertex)]
    while heap:
        d, v = heapq.heappop(heap)
        if d > dist.get(v, UNREACHABLE):
            continue
        for eid in net.out[v]:
            e = net.edges[eid]
            nd = d + e.length
            if nd < dist.get(e.head, UNREACHABLE):
                dist[e.head] = nd
                heapq.heappush(heap, (nd, e.head))
    return dist


def path_distance(net: Network, x: EdgePoint, y: EdgePoint) -> float:
    """Length of the shortest orientation-respecting path from x to y.

    Returns ``math.inf`` when y is not reachable driving downstream from x.
    """
    ex = _check_point(net, x)
    ey = _check_point(net, y)
    best = UNREACHABLE
    if x.edge == y.edge and y.offset >= x.offset:
        best = y.offset - x.offset
    # leave ex at its head, travel through vertices, enter ey at its tail
    to_head = ex.length - x.offset
    vdist = vertex_distances(net, ex.head)
    via = vdist.get(ey.tail)
    if via is not None:
        best = min(best, to_head + via + y.offset)
    return best


def visual_field(net: Network, x: EdgePoint, radius: float):
    """Downstream segments within ``radius`` of x: the driver's visual field.

    Returns ``[(edge_id, (a, b)), ...]``: the remainder of x's own edge up to
    ``radius`` plus, when the radius spills past the head vertex, an initial
    segment of every outgoing edge. Requires ``radius < min_edge_length`` so
    the field never crosses more than one junction.
    """
    if radius <= 0:
        raise ValidationError(f"radius must be positive, got {radius}")
    if radius >= net.min_edge_length:
        raise ConstraintError(
            f"radius {radius} must be smaller than the shortest edge "
            f"length {net.min_edge_length}"
        )
    e = _check_point(net, x)
    segments = []
    own_end = min(x.offset + radius, e.length)
    if own_end > x.offset:
        segments.append((x.edge, (x.offset, own_end)))
    spill = x.offset + radius - e.length
    if spill > 0:
        for eid in net.out[e.head]:
            segments.append((eid, (0.0, spill)))
    return segments
