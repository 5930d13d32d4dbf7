"""Scenario ingestion: the full problem description parsed from a key/value file.

The file format is a plain-text tree of ``[section]`` headers and repeatable
``key = value`` lines (see ``docs/scenario-format.md``). Everything is
validated eagerly at parse time; errors carry the file path and line number.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .control import SwitchSchedule
from .errors import ConstraintError, ScenarioFormatError, ValidationError
from .fields import DensityField, EdgeGrid, discretize_density, make_grids, tabulated_density
from .network import Network, build_network

ROW_SUM_TOL = 1e-12


# ---------------------------------------------------------------------------
# domain types


@dataclass
class DistributionSchedule:
    """Piecewise-constant-in-time row-stochastic split matrices at junctions.

    ``matrices[k]`` is the dense (E, E) matrix active on
    ``[breakpoints[k], breakpoints[k+1])``; entry (i, j) is the fraction of
    mass leaving edge i that enters edge j. Right-continuous at breakpoints.
    """

    breakpoints: np.ndarray
    matrices: np.ndarray
    horizon: float
    out_edges: list[list[int]]

    def interval_index(self, t: float) -> int:
        if not 0.0 <= t <= self.horizon:
            raise ValidationError(f"t={t} outside [0, {self.horizon}]")
        idx = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        return min(max(idx, 0), len(self.matrices) - 1)

    def matrix_at(self, t: float) -> np.ndarray:
        return self.matrices[self.interval_index(t)]


def distribution_row(sched: DistributionSchedule, edge: int, t: float) -> dict[int, float]:
    """Active split probabilities of ``edge`` over its outgoing edges at time t."""
    mat = sched.matrix_at(t)
    return {j: float(mat[edge, j]) for j in sched.out_edges[edge]}


@dataclass
class InflowSchedule:
    """Piecewise-constant nonnegative inflow rates (mass per unit time) per source."""

    rates: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    def rate_at(self, vertex: str, t: float) -> float:
        if vertex not in self.rates:
            return 0.0
        bps, vals = self.rates[vertex]
        idx = int(np.searchsorted(bps, t, side="right")) - 1
        if idx < 0:
            return 0.0
        return float(vals[idx])

    def total_mass(self, horizon: float) -> float:
        total = 0.0
        for bps, vals in self.rates.values():
            edges = np.append(bps, horizon)
            widths = np.clip(np.diff(edges), 0.0, None)
            total += float(widths @ vals)
        return total


@dataclass
class KernelParams:
    """Interaction kernel: strength profile, reach and route weights.

    The default profile is the rational (Cucker-Smale style) form
    ``k(r) = mu2 / (mu1 + r)**beta``; a tabulated profile interpolated
    linearly is the escape hatch. ``alpha[(k, j)]`` weights the portion of the
    visual field that lies on outgoing edge j when looking from edge k.
    """

    radius: float
    kind: str = "rational"
    mu1: float = 1.0
    mu2: float = 1.0
    beta: float = 1.0
    table_r: np.ndarray | None = None
    table_k: np.ndarray | None = None
    alpha: dict[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        if self.radius <= 0:
            raise ValidationError(f"kernel radius must be positive, got {self.radius}")
        if self.kind not in ("rational", "table"):
            raise ValidationError(f"unknown kernel type {self.kind!r}")
        if self.kind == "rational":
            if self.mu1 <= 0 or self.mu2 < 0 or self.beta < 0:
                raise ValidationError(
                    f"need mu1 > 0, mu2 >= 0, beta >= 0, got "
                    f"({self.mu1}, {self.mu2}, {self.beta})"
                )
        else:
            self.table_r = np.asarray(self.table_r, dtype=float)
            self.table_k = np.asarray(self.table_k, dtype=float)
            if self.table_r.size < 2 or self.table_r.size != self.table_k.size:
                raise ValidationError("tabulated kernel needs matching r/k samples")
            if np.any(np.diff(self.table_r) <= 0):
                raise ValidationError("tabulated kernel radii must increase")
            if np.any(self.table_k < 0):
                raise ValidationError("kernel values must be nonnegative")

    def k_eval(self, r):
        """Interaction strength at distance(s) r."""
        r = np.asarray(r, dtype=float)
        if self.kind == "rational":
            return self.mu2 / (self.mu1 + r) ** self.beta
        return np.interp(r, self.table_r, self.table_k, right=0.0)


@dataclass
class LightConfig:
    """A traffic light at the head vertex of ``edge`` with a linear slowdown ramp."""

    edge: int
    vertex: str
    radius: float
    schedule: SwitchSchedule | None = None
    complement_edge: int | None = None


@dataclass
class FleetControl:
    """Speed-modulation field u(x, t) in [0, 1] for the autonomous fleet.

    Either a constant, or values tabulated per cell on a declared uniform time
    grid (interpolated linearly in time during the co-simulation).
    """

    kind: str = "constant"
    value: float = 1.0
    time_grid: np.ndarray | None = None
    tables: list[np.ndarray] | None = None

    def values_at(self, edge: int, t: float, n_cells: int) -> np.ndarray:
        if self.kind == "constant":
            return np.full(n_cells, self.value)
        tg = self.time_grid
        idx = min(max(int(np.searchsorted(tg, t, side="right")) - 1, 0), tg.size - 2)
        w = (t - tg[idx]) / (tg[idx + 1] - tg[idx])
        w = min(max(w, 0.0), 1.0)
        tab = self.tables[edge]
        return (1.0 - w) * tab[idx] + w * tab[idx + 1]


@dataclass
class FleetConfig:
    """Autonomous-fleet block: initial density, split matrix Q, control field."""

    blocks: list
    tables: dict
    distribution: DistributionSchedule
    control: FleetControl
    lipschitz: float = 0.0
    kernel: KernelParams | None = None


@dataclass
class Scenario:
    """Validated full problem description; immutable after parsing."""

    network: Network
    grids: list[EdgeGrid]
    horizon: float
    vf: dict[int, tuple]
    kernel: KernelParams | None
    light: LightConfig | None
    initial_blocks: list
    initial_tables: dict
    distribution: DistributionSchedule
    inflow: InflowSchedule
    fleet: FleetConfig | None = None
    source_path: str | None = None

    def vf_at(self, edge_id: int, x) -> np.ndarray:
        spec = self.vf[edge_id]
        if spec[0] == "const":
            return np.full_like(np.asarray(x, dtype=float), spec[1])
        _, xs, vs = spec
        return np.interp(x, xs, vs)

    def vf_max(self) -> float:
        worst = 0.0
        for e in self.network.edges:
            spec = self.vf[e.id]
            worst = max(worst, spec[1] if spec[0] == "const" else float(np.max(spec[2])))
        return worst

    def initial_density(self) -> DensityField:
        rho = discretize_density(self.initial_blocks, self.grids)
        if self.initial_tables:
            tab = tabulated_density(self.initial_tables, self.grids)
            for eid in range(len(self.grids)):
                rho.values[eid] += tab.values[eid]
        return rho

    def min_dx(self) -> float:
        return min(g.dx for g in self.grids)


# ---------------------------------------------------------------------------
# raw file parsing


def _parse_raw(text: str, path: str):
    """Split the file into sections of (line_no, key, value) entries."""
    sections: dict[str, list] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ScenarioFormatError("malformed section header", path, lineno)
            current = line[1:-1].strip().lower()
            sections.setdefault(current, [])
            continue
        if current is None:
            raise ScenarioFormatError("entry before any [section] header", path, lineno)
        if "=" not in line:
            raise ScenarioFormatError(f"expected 'key = value', got {line!r}", path, lineno)
        key, value = line.split("=", 1)
        sections[current].append((lineno, key.strip().lower(), value.strip()))
    return sections


def _floats(tokens, path, lineno, what):
    try:
        return [float(tok) for tok in tokens]
    except ValueError:
        raise ScenarioFormatError(f"{what}: expected numbers, got {tokens}", path, lineno)


def _single(entries, key, path, required=True, default=None):
    hits = [(ln, v) for ln, k, v in entries if k == key]
    if not hits:
        if required:
            raise ScenarioFormatError(f"missing required key {key!r}", path)
        return default, None
    if len(hits) > 1:
        raise ScenarioFormatError(f"key {key!r} given more than once", path, hits[1][0])
    return hits[0][1], hits[0][0]


def _build_distribution(entries, net, horizon, path, label="matrixP"):
    """Assemble interval matrices from 't =' markers and 'row =' lines."""
    n_edges = len(net.edges)
    intervals = [(0.0, {})]
    for lineno, key, value in entries:
        if key == "t":
            (t,) = _floats(value.split(), path, lineno, f"[{label}] t")
            if t == 0.0 and not intervals[0][1]:
                continue
            if t <= intervals[-1][0]:
                raise ScenarioFormatError(
                    f"[{label}] breakpoints must increase, got t={t}", path, lineno
                )
            if t >= horizon:
                raise ScenarioFormatError(
                    f"[{label}] breakpoint t={t} at or beyond horizon {horizon}",
                    path, lineno,
                )
            intervals.append((t, {}))
        elif key == "row":
            toks = value.split()
            if len(toks) != 3:
                raise ScenarioFormatError(
                    f"[{label}] row: expected 'FROM TO P', got {value!r}", path, lineno
                )
            try:
                src = net.edge_by_name(toks[0]).id
                dst = net.edge_by_name(toks[1]).id
            except ValidationError as exc:
                raise ScenarioFormatError(f"[{label}] row: {exc}", path, lineno)
            (p,) = _floats(toks[2:], path, lineno, f"[{label}] row")
            intervals[-1][1][(src, dst, lineno)] = p
        else:
            raise ScenarioFormatError(f"unknown key {key!r} in [{label}]", path, lineno)

    out_edges = [net.out[e.head] for e in net.edges]
    breakpoints = np.array([t for t, _ in intervals])
    matrices = np.zeros((len(intervals), n_edges, n_edges))
    for idx, (_, rows) in enumerate(intervals):
        for (src, dst, lineno), p in rows.items():
            if dst not in out_edges[src]:
                raise ScenarioFormatError(
                    f"[{label}] row {net.edges[src].name}->{net.edges[dst].name}: "
                    "edges are not consecutive at a common vertex",
                    path, lineno,
                )
            if not 0.0 <= p <= 1.0:
                raise ScenarioFormatError(
                    f"[{label}] entry {p} outside [0, 1]", path, lineno
                )
            matrices[idx, src, dst] = p
        # a single outgoing edge forces the full split onto it
        for src in range(n_edges):
            if len(out_edges[src]) == 1 and matrices[idx, src].sum() == 0.0:
                matrices[idx, src, out_edges[src][0]] = 1.0
        for src in range(n_edges):
            if out_edges[src]:
                total = matrices[idx, src, out_edges[src]].sum()
                if abs(total - 1.0) > ROW_SUM_TOL:
                    raise ScenarioFormatError(
                        f"[{label}] row for edge {net.edges[src].name} sums to "
                        f"{total!r}, expected 1 within {ROW_SUM_TOL}",
                        path,
                    )
    return DistributionSchedule(breakpoints, matrices, horizon, out_edges)


def _build_blocks(entries, net, grids, path, section):
    blocks = []
    tables = {}
    for lineno, key, value in entries:
        toks = value.split()
        if key == "block":
            if len(toks) != 4:
                raise ScenarioFormatError(
                    f"block: expected 'EDGE A B HEIGHT', got {value!r}", path, lineno
                )
            try:
                eid = net.edge_by_name(toks[0]).id
            except ValidationError as exc:
                raise ScenarioFormatError(f"[{section}] block: {exc}", path, lineno)
            a, b, h = _floats(toks[1:], path, lineno, "block")
            if h < 0:
                raise ScenarioFormatError(f"negative density {h}", path, lineno)
            if not (0.0 <= a < b <= net.edges[eid].length):
                raise ScenarioFormatError(
                    f"block [{a}, {b}] outside edge {toks[0]} "
                    f"of length {net.edges[eid].length}",
                    path, lineno,
                )
            blocks.append((eid, a, b, h))
        elif key == "table":
            try:
                eid = net.edge_by_name(toks[0]).id
            except ValidationError as exc:
                raise ScenarioFormatError(f"[{section}] table: {exc}", path, lineno)
            vals = np.array(_floats(toks[1:], path, lineno, "table"))
            if vals.size != grids[eid].n_cells:
                raise ScenarioFormatError(
                    f"table for {toks[0]}: {vals.size} values, grid has "
                    f"{grids[eid].n_cells} cells",
                    path, lineno,
                )
            if np.any(vals < 0):
                raise ScenarioFormatError("negative tabulated density", path, lineno)
            tables[eid] = vals
        else:
            raise ScenarioFormatError(f"unknown key {key!r} in [{section}]", path, lineno)
    return blocks, tables


def _build_kernel(entries, net, path, section="kernel"):
    kind, _ = _single(entries, "type", path, required=False, default="rational")
    if kind == "none":
        return None
    radius_s, ln = _single(entries, "radius", path)
    (radius,) = _floats([radius_s], path, ln, "radius")
    params = {}
    for name, default in (("mu1", 1.0), ("mu2", 1.0), ("beta", 1.0)):
        v, ln2 = _single(entries, name, path, required=False)
        params[name] = float(v) if v is not None else default
    table_r = table_k = None
    if kind == "table":
        tab, ln3 = _single(entries, "table", path)
        vals = _floats(tab.split(), path, ln3, "kernel table")
        if len(vals) % 2:
            raise ScenarioFormatError("kernel table needs r/k pairs", path, ln3)
        table_r, table_k = np.array(vals[0::2]), np.array(vals[1::2])

    alpha = {}
    explicit = set()
    for lineno, key, value in entries:
        if key != "alpha":
            continue
        toks = value.split()
        if len(toks) != 3:
            raise ScenarioFormatError(
                f"alpha: expected 'FROM TO WEIGHT', got {value!r}", path, lineno
            )
        try:
            src = net.edge_by_name(toks[0]).id
            dst = net.edge_by_name(toks[1]).id
        except ValidationError as exc:
            raise ScenarioFormatError(f"[{section}] alpha: {exc}", path, lineno)
        (w,) = _floats(toks[2:], path, lineno, "alpha")
        if dst not in net.out[net.edges[src].head]:
            raise ScenarioFormatError(
                f"alpha {toks[0]}->{toks[1]}: edges not consecutive", path, lineno
            )
        if not 0.0 <= w <= 1.0:
            raise ScenarioFormatError(f"alpha weight {w} outside [0, 1]", path, lineno)
        alpha[(src, dst)] = w
        explicit.add(src)
    # default: uniform priority over the outgoing edges
    for e in net.edges:
        outs = net.out[e.head]
        if not outs or e.id in explicit:
            continue
        for j in outs:
            alpha[(e.id, j)] = 1.0 / len(outs)
    for src in explicit:
        outs = net.out[net.edges[src].head]
        total = sum(alpha.get((src, j), 0.0) for j in outs)
        if abs(total - 1.0) > ROW_SUM_TOL:
            raise ScenarioFormatError(
                f"alpha row for edge {net.edges[src].name} sums to {total!r}", path
            )

    kernel = KernelParams(
        radius=radius, kind=kind, mu1=params["mu1"], mu2=params["mu2"],
        beta=params["beta"], table_r=table_r, table_k=table_k, alpha=alpha,
    )
    if kernel.radius >= net.min_edge_length:
        raise ConstraintError(
            f"interaction radius {kernel.radius} must be smaller than the "
            f"shortest edge length {net.min_edge_length}"
        )
    return kernel


def parse_scenario_text(text: str, path: str = "<string>") -> Scenario:
    sections = _parse_raw(text, path)

    unknown = set(sections) - {
        "network", "grid", "velocity", "kernel", "lights", "initial",
        "matrixp", "inflow", "fleet",
    }
    if unknown:
        raise ScenarioFormatError(f"unknown sections: {sorted(unknown)}", path)

    # [network]
    if "network" not in sections:
        raise ScenarioFormatError("missing [network] section", path)
    edge_defs = []
    for lineno, key, value in sections["network"]:
        if key != "edge":
            raise ScenarioFormatError(f"unknown key {key!r} in [network]", path, lineno)
        toks = value.split()
        if len(toks) not in (4, 5) or (len(toks) == 5 and toks[4] != "terminal"):
            raise ScenarioFormatError(
                f"edge: expected 'NAME TAIL HEAD LENGTH [terminal]', got {value!r}",
                path, lineno,
            )
        (length,) = _floats(toks[3:4], path, lineno, "edge length")
        edge_defs.append((toks[0], toks[1], toks[2], length, len(toks) == 5))
    try:
        net = build_network(edge_defs)
    except ValidationError as exc:
        raise ScenarioFormatError(str(exc), path)

    # [grid]
    grid_entries = sections.get("grid", [])
    horizon_s, ln = _single(grid_entries, "horizon", path)
    (horizon,) = _floats([horizon_s], path, ln, "horizon")
    if horizon <= 0:
        raise ScenarioFormatError(f"horizon must be positive, got {horizon}", path, ln)
    dx_s, ln = _single(grid_entries, "dx", path, required=False)
    dx_target = float(dx_s) if dx_s is not None else None
    cells = {}
    for lineno, key, value in grid_entries:
        if key == "cells":
            toks = value.split()
            try:
                eid = net.edge_by_name(toks[0]).id
            except ValidationError as exc:
                raise ScenarioFormatError(f"[grid] cells: {exc}", path, lineno)
            cells[eid] = int(toks[1])
        elif key not in ("horizon", "dx"):
            raise ScenarioFormatError(f"unknown key {key!r} in [grid]", path, lineno)
    try:
        grids = make_grids(net, dx_target, cells)
    except ValidationError as exc:
        raise ScenarioFormatError(str(exc), path)

    # [velocity]
    vf: dict[int, tuple] = {}
    for lineno, key, value in sections.get("velocity", []):
        if key != "vf":
            raise ScenarioFormatError(f"unknown key {key!r} in [velocity]", path, lineno)
        toks = value.split()
        if len(toks) == 1:
            try:
                speed = float(toks[0])
            except ValueError:
                raise ScenarioFormatError(
                    f"vf: expected a speed or an edge name, got {value!r}", path, lineno
                )
            if speed <= 0:
                raise ScenarioFormatError(f"vf must be positive, got {speed}", path, lineno)
            for e in net.edges:
                vf[e.id] = ("const", speed)
            continue
        try:
            eid = net.edge_by_name(toks[0]).id
        except ValidationError as exc:
            raise ScenarioFormatError(f"[velocity] vf: {exc}", path, lineno)
        vals = _floats(toks[1:], path, lineno, "vf")
        if len(vals) == 1:
            if vals[0] <= 0:
                raise ScenarioFormatError(f"vf must be positive, got {vals[0]}", path, lineno)
            vf[eid] = ("const", vals[0])
        elif len(vals) >= 4 and len(vals) % 2 == 0:
            xs, vs = np.array(vals[0::2]), np.array(vals[1::2])
            if np.any(np.diff(xs) <= 0):
                raise ScenarioFormatError("vf profile positions must increase", path, lineno)
            if np.any(vs <= 0):
                raise ScenarioFormatError("vf must be positive everywhere", path, lineno)
            vf[eid] = ("pwl", xs, vs)
        else:
            raise ScenarioFormatError(
                f"vf: expected a constant or x/v pairs, got {value!r}", path, lineno
            )
    missing = [e.name for e in net.edges if e.id not in vf]
    if missing:
        raise ScenarioFormatError(f"[velocity] missing vf for edges {missing}", path)

    # [kernel]
    kernel = None
    if "kernel" in sections:
        kernel = _build_kernel(sections["kernel"], net, path)

    # [lights]
    light = None
    if "lights" in sections:
        entries = sections["lights"]
        edge_s, ln = _single(entries, "edge", path)
        try:
            eid = net.edge_by_name(edge_s).id
        except ValidationError as exc:
            raise ScenarioFormatError(f"[lights] edge: {exc}", path, ln)
        vertex, ln2 = _single(entries, "vertex", path, required=False)
        vertex = vertex if vertex is not None else net.edges[eid].head
        if net.edges[eid].head != vertex:
            raise ScenarioFormatError(
                f"light on edge {edge_s} must sit at that edge's head vertex "
                f"({net.edges[eid].head}), got {vertex}",
                path, ln2,
            )
        radius_s, ln3 = _single(entries, "radius", path)
        (radius,) = _floats([radius_s], path, ln3, "light radius")
        if not 0 < radius <= net.min_edge_length:
            raise ScenarioFormatError(
                f"light radius {radius} must lie in (0, L0={net.min_edge_length}]",
                path, ln3,
            )
        u0_s, _ = _single(entries, "u0", path, required=False)
        dur_s, ln4 = _single(entries, "durations", path, required=False)
        tg_s, _ = _single(entries, "t_green", path, required=False)
        tr_s, _ = _single(entries, "t_red", path, required=False)
        schedule = None
        if dur_s is not None:
            if u0_s is None:
                raise ScenarioFormatError("durations given without u0", path, ln4)
            try:
                schedule = SwitchSchedule(
                    int(u0_s),
                    np.array(_floats(dur_s.split(), path, ln4, "durations")),
                    float(tg_s) if tg_s is not None else None,
                    float(tr_s) if tr_s is not None else None,
                )
            except ValidationError as exc:
                raise ScenarioFormatError(f"[lights] {exc}", path, ln4)
        elif u0_s is not None:
            raise ScenarioFormatError("u0 given without durations", path)

        complement = None
        if vertex in net.junctions:
            inc = net.inc[vertex]
            if len(inc) != 2:
                raise ScenarioFormatError(
                    f"lighted junction {vertex} has {len(inc)} incoming edges; "
                    "a single binary schedule determines the signals only for "
                    "two incoming edges",
                    path,
                )
            complement = inc[0] if inc[1] == eid else inc[1]
        light = LightConfig(eid, vertex, radius, schedule, complement)

    # [initial]
    blocks, tables = _build_blocks(sections.get("initial", []), net, grids, path, "initial")

    # [matrixP]
    distribution = _build_distribution(sections.get("matrixp", []), net, horizon, path)

    # [inflow]
    inflow = InflowSchedule()
    staged: dict[str, list] = {}
    for lineno, key, value in sections.get("inflow", []):
        if key != "rate":
            raise ScenarioFormatError(f"unknown key {key!r} in [inflow]", path, lineno)
        toks = value.split()
        if len(toks) != 3:
            raise ScenarioFormatError(
                f"rate: expected 'VERTEX T0 VALUE', got {value!r}", path, lineno
            )
        vtx = toks[0]
        if vtx not in net.sources:
            raise ScenarioFormatError(f"inflow vertex {vtx} is not a source", path, lineno)
        if len(net.out[vtx]) != 1:
            raise ScenarioFormatError(
                f"inflow source {vtx} must have exactly one outgoing edge", path, lineno
            )
        t0, val = _floats(toks[1:], path, lineno, "rate")
        if val < 0:
            raise ScenarioFormatError(f"negative inflow rate {val}", path, lineno)
        staged.setdefault(vtx, []).append((t0, val))
    for vtx, pairs in staged.items():
        pairs.sort()
        bps = np.array([p[0] for p in pairs])
        if np.any(np.diff(bps) <= 0):
            raise ScenarioFormatError(f"inflow breakpoints for {vtx} must increase", path)
        inflow.rates[vtx] = (bps, np.array([p[1] for p in pairs]))

    # [fleet]
    fleet = None
    if "fleet" in sections:
        entries = sections["fleet"]
        fblocks, ftables = _build_blocks(
            [e for e in entries if e[1] in ("block", "table")], net, grids, path, "fleet"
        )
        q = _build_distribution(
            [e for e in entries if e[1] in ("t", "row")], net, horizon, path, label="fleet"
        )
        ctrl_s, lnc = _single(entries, "control", path, required=False, default="constant 1.0")
        toks = ctrl_s.split()
        if toks[0] != "constant" or len(toks) != 2:
            raise ScenarioFormatError(
                "only 'control = constant C' is supported in scenario files; "
                "tabulated controls are built through the library API",
                path, lnc,
            )
        (cval,) = _floats(toks[1:], path, lnc, "control")
        if not 0.0 <= cval <= 1.0:
            raise ScenarioFormatError(f"control value {cval} outside [0, 1]", path, lnc)
        lip_s, _ = _single(entries, "lipschitz", path, required=False, default="0.0")
        fkernel_entries = [
            e for e in entries
            if e[1] in ("type", "radius", "mu1", "mu2", "beta", "alpha")
        ]
        fkernel = kernel
        if fkernel_entries:
            fkernel = _build_kernel(fkernel_entries, net, path, section="fleet")
        fleet = FleetConfig(
            blocks=fblocks, tables=ftables, distribution=q,
            control=FleetControl("constant", cval),
            lipschitz=float(lip_s), kernel=fkernel,
        )

    return Scenario(
        network=net, grids=grids, horizon=horizon, vf=vf, kernel=kernel,
        light=light, initial_blocks=blocks, initial_tables=tables,
        distribution=distribution, inflow=inflow, fleet=fleet, source_path=path,
    )


def parse_scenario(path) -> Scenario:
    """Parse and eagerly validate a scenario file."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario_text(fh.read(), str(path))


# ---------------------------------------------------------------------------
# serialization (round-trips bit-for-bit through repr)


def serialize_scenario(scn: Scenario) -> str:
    net = scn.network
    out = ["[network]"]
    for e in net.edges:
        flag = " terminal" if e.is_terminal else ""
        out.append(f"edge = {e.name} {e.tail} {e.head} {e.length!r}{flag}")

    out += ["", "[grid]", f"horizon = {scn.horizon!r}"]
    for g in scn.grids:
        out.append(f"cells = {net.edges[g.edge].name} {g.n_cells}")

    out += ["", "[velocity]"]
    for eid, spec in scn.vf.items():
        name = net.edges[eid].name
        if spec[0] == "const":
            out.append(f"vf = {name} {spec[1]!r}")
        else:
            pairs = " ".join(f"{x!r} {v!r}" for x, v in zip(spec[1], spec[2]))
            out.append(f"vf = {name} {pairs}")

    def kernel_lines(kernel, section):
        lines = ["", f"[{section}]", f"type = {kernel.kind}", f"radius = {kernel.radius!r}"]
        if kernel.kind == "rational":
            lines += [f"mu1 = {kernel.mu1!r}", f"mu2 = {kernel.mu2!r}",
                      f"beta = {kernel.beta!r}"]
        else:
            pairs = " ".join(f"{r!r} {k!r}" for r, k in zip(kernel.table_r, kernel.table_k))
            lines.append(f"table = {pairs}")
        for (src, dst), w in sorted(kernel.alpha.items()):
            lines.append(f"alpha = {net.edges[src].name} {net.edges[dst].name} {w!r}")
        return lines

    if scn.kernel is not None:
        out += kernel_lines(scn.kernel, "kernel")

    if scn.light is not None:
        lt = scn.light
        out += ["", "[lights]", f"edge = {net.edges[lt.edge].name}",
                f"vertex = {lt.vertex}", f"radius = {lt.radius!r}"]
        if lt.schedule is not None:
            s = lt.schedule
            out.append(f"u0 = {s.u0}")
            out.append("durations = " + " ".join(repr(d) for d in s.durations))
            if s.t_green is not None:
                out += [f"t_green = {s.t_green!r}", f"t_red = {s.t_red!r}"]

    out += ["", "[initial]"]
    for eid, a, b, h in scn.initial_blocks:
        out.append(f"block = {net.edges[eid].name} {a!r} {b!r} {h!r}")
    for eid, vals in scn.initial_tables.items():
        out.append(f"table = {net.edges[eid].name} " + " ".join(repr(v) for v in vals))

    def distribution_lines(sched, label):
        lines = ["", f"[{label}]"]
        for idx, t in enumerate(sched.breakpoints):
            if idx > 0:
                lines.append(f"t = {t!r}")
            mat = sched.matrices[idx]
            for src in range(len(net.edges)):
                for dst in sched.out_edges[src]:
                    if mat[src, dst] != 0.0:
                        lines.append(
                            f"row = {net.edges[src].name} {net.edges[dst].name} "
                            f"{mat[src, dst]!r}"
                        )
        return lines

    out += distribution_lines(scn.distribution, "matrixP")

    if scn.inflow.rates:
        out += ["", "[inflow]"]
        for vtx, (bps, vals) in scn.inflow.rates.items():
            for t0, v in zip(bps, vals):
                out.append(f"rate = {vtx} {t0!r} {v!r}")

    if scn.fleet is not None:
        fl = scn.fleet
        out += ["", "[fleet]"]
        for eid, a, b, h in fl.blocks:
            out.append(f"block = {net.edges[eid].name} {a!r} {b!r} {h!r}")
        for eid, vals in fl.tables.items():
            out.append(f"table = {net.edges[eid].name} " + " ".join(repr(v) for v in vals))
        for idx, t in enumerate(fl.distribution.breakpoints):
            if idx > 0:
                out.append(f"t = {t!r}")
            mat = fl.distribution.matrices[idx]
            for src in range(len(net.edges)):
                for dst in fl.distribution.out_edges[src]:
                    if mat[src, dst] != 0.0:
                        out.append(
                            f"row = {net.edges[src].name} {net.edges[dst].name} "
                            f"{mat[src, dst]!r}"
                        )
        out.append(f"control = constant {fl.control.value!r}")
        out.append(f"lipschitz = {fl.lipschitz!r}")
        if fl.kernel is not None and fl.kernel is not scn.kernel:
            out += kernel_lines(fl.kernel, "fleet")[2:]  # keys merge into [fleet]

    return "\n".join(out) + "\n"
