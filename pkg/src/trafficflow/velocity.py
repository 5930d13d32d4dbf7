"""Effective speed field: free-flow minus nonlocal driver interaction minus light ramp.

The speed on every cell is ``v = max(v_f - v_i[m] - v_e, 0)``. The
interaction term v_i integrates the downstream density against a distance
kernel over the driver's visual field; the light term v_e is a linear ramp
anchored at the lighted junction, scaled by the binary signal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConstraintError, ValidationError
from .fields import EdgeGrid
from .network import Network
from .scenario import KernelParams


@dataclass
class VelocityField:
    """Cell speeds plus face speeds per edge at one instant.

    ``faces[e][0]`` and ``faces[e][-1]`` are exact endpoint evaluations (tail
    and head vertex); interior faces are arithmetic means of the adjacent
    cells. ``clamp_mask`` marks cells where the nonnegativity clamp fired.
    """

    cells: list[np.ndarray]
    faces: list[np.ndarray]
    clamp_mask: list[np.ndarray]

    @property
    def clamped_anywhere(self) -> bool:
        return any(bool(mask.any()) for mask in self.clamp_mask)

    def max_face_speed(self, edge_id: int) -> float:
        return float(self.faces[edge_id].max())


class KernelTables:
    """Precomputed kernel samples for fast per-step interaction sums.

    For each edge the on-edge window holds k(w*dx) for cell-center pairs; for
    each (incoming, outgoing) pair at a vertex a small matrix holds the
    kernel across the junction, masked at the interaction radius. The same
    tables drive the forward interaction term, its endpoint traces and the
    reversed convolution used by the backward solve.
    """

    def __init__(self, net: Network, grids: list[EdgeGrid], params: KernelParams):
        if params.radius >= net.min_edge_length:
            raise ConstraintError(
                f"interaction radius {params.radius} must be smaller than the "
                f"shortest edge length {net.min_edge_length}"
            )
        self.net = net
        self.grids = grids
        self.params = params
        R = params.radius
        self.k0 = float(params.k_eval(0.0))

        self.kvals = []
        self.kvals_half = []
        for g in grids:
            w_max = int(np.floor(R / g.dx + 1e-12))
            w = np.arange(min(w_max + 1, g.n_cells))
            self.kvals.append(np.ascontiguousarray(params.k_eval(w * g.dx)))
            l_max = int(np.floor(R / g.dx - 0.5 + 1e-12))
            l = np.arange(max(min(l_max + 1, g.n_cells), 0))
            self.kvals_half.append(np.ascontiguousarray(params.k_eval((l + 0.5) * g.dx)))

        # cross-junction kernel matrices: rows = cells counted from the head
        # of the incoming edge, columns = leading cells of the outgoing edge
        self.cross: dict[tuple[int, int], np.ndarray] = {}
        self.alpha = dict(params.alpha)
        for e in net.edges:
            outs = net.out[e.head]
            if not outs:
                continue
            gk = grids[e.id]
            rows = self.kvals_half[e.id].size
            if rows == 0:
                continue
            d_head = (np.arange(rows) + 0.5) * gk.dx
            for j in outs:
                gj = grids[j]
                cols = self.kvals_half[j].size
                if cols == 0:
                    continue
                dist = d_head[:, None] + (np.arange(cols) + 0.5) * gj.dx
                mat = np.where(dist <= R, params.k_eval(dist), 0.0)
                if np.any(mat):
                    self.cross[(e.id, j)] = mat

    def interaction(self, m_values: list[np.ndarray]):
        """Interaction speed v_i on every cell plus head/tail endpoint values."""
        net, grids = self.net, self.grids
        vi = [kernels.windowed_corr(m_values[g.edge], self.kvals[g.edge], g.dx)
              for g in grids]
        vi_head = np.zeros(len(grids))
        vi_tail = np.zeros(len(grids))
        for e in net.edges:
            kh = self.kvals_half[e.id]
            if kh.size:
                m = m_values[e.id]
                vi_tail[e.id] = kh @ m[: kh.size] * grids[e.id].dx
            for j in net.out[e.head]:
                a = self.alpha[(e.id, j)]
                khj = self.kvals_half[j]
                if khj.size:
                    vi_head[e.id] += a * (khj @ m_values[j][: khj.size]) * grids[j].dx
                mat = self.cross.get((e.id, j))
                if mat is not None:
                    contrib = a * (mat @ m_values[j][: mat.shape[1]]) * grids[j].dx
                    n = grids[e.id].n_cells
                    vi[e.id][n - mat.shape[0]:] += contrib[::-1]
        return vi, vi_head, vi_tail

    def reversed_conv(self, phi_values: list[np.ndarray]) -> list[np.ndarray]:
        """(nu * phi)(x): kernel integral over the upstream cells y with y -> x."""
        net, grids = self.net, self.grids
        out = [kernels.rev_windowed_corr(phi_values[g.edge], self.kvals[g.edge], g.dx)
               for g in grids]
        for e in net.edges:
            for j in net.out[e.head]:
                mat = self.cross.get((e.id, j))
                if mat is None:
                    continue
                a = self.alpha[(e.id, j)]
                n = grids[e.id].n_cells
                tail = phi_values[e.id][n - mat.shape[0]:][::-1]
                out[j][: mat.shape[1]] += a * (mat.T @ tail) * grids[e.id].dx
        return out


def interaction_velocity(net: Network, kernel: KernelParams, m_values,
                         grids: list[EdgeGrid]) -> list[np.ndarray]:
    """Per-cell interaction speed v_i[m] (one array per edge)."""
    values = m_values.values if hasattr(m_values, "values") else m_values
    vi, _, _ = KernelTables(net, grids, kernel).interaction(list(values))
    return vi


def light_ramp(grid: EdgeGrid, radius: float, vf_cells: np.ndarray) -> np.ndarray:
    """Slowdown profile H(x, V) on a lighted edge: linear ramp toward the head."""
    d = grid.length - grid.centers
    return vf_cells * np.clip(1.0 - d / radius, 0.0, None)


def light_interaction_velocity(net: Network, grid: EdgeGrid, edge_id: int,
                               vertex: str, radius: float, u_value: float,
                               vf_cells: np.ndarray) -> np.ndarray:
    """Light term v_e on one edge: the signal-scaled ramp anchored at the head."""
    if net.edges[edge_id].head != vertex:
        raise ValidationError(
            f"light vertex {vertex} is not the head of edge "
            f"{net.edges[edge_id].name}"
        )
    if not 0 < radius <= net.min_edge_length:
        raise ConstraintError(
            f"light radius {radius} must lie in (0, L0={net.min_edge_length}]"
        )
    return u_value * light_ramp(grid, radius, vf_cells)


def effective_velocity(vf_cells, vi_cells=None, ve_cells=None,
                       vf_tail=None, vf_head=None) -> VelocityField:
    """Clamped speed ``max(v_f - v_i - v_e, 0)`` with face averaging.

    ``vf_tail``/``vf_head`` override the endpoint faces (exact boundary
    evaluations); by default the adjacent cell value is copied.
    """
    cells, faces, masks = [], [], []
    n_edges = len(vf_cells)
    for e in range(n_edges):
        vf = np.asarray(vf_cells[e], dtype=float)
        if np.any(vf < 0):
            raise ValidationError("free-flow speed must be nonnegative")
        raw = vf.copy()
        if vi_cells is not None:
            raw = raw - vi_cells[e]
        if ve_cells is not None:
            raw = raw - ve_cells[e]
        mask = raw < 0.0
        v = np.where(mask, 0.0, raw)
        f = np.empty(v.size + 1)
        f[1:-1] = 0.5 * (v[:-1] + v[1:])
        f[0] = v[0] if vf_tail is None else max(vf_tail[e], 0.0)
        f[-1] = v[-1] if vf_head is None else max(vf_head[e], 0.0)
        cells.append(v)
        faces.append(f)
        masks.append(mask)
    return VelocityField(cells, faces, masks)
