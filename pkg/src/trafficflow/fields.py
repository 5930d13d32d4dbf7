"""Per-edge finite-volume grids, cell-averaged density storage and diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .network import Network


@dataclass(frozen=True)
class EdgeGrid:
    """Uniform cell grid on one edge; cell i covers [i*dx, (i+1)*dx]."""

    edge: int
    n_cells: int
    dx: float

    def __post_init__(self):
        if self.n_cells < 2:
            raise ValidationError(f"edge {self.edge}: need at least 2 cells")

    @property
    def length(self) -> float:
        return self.n_cells * self.dx

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dx


def make_grids(net: Network, dx_target: float | None = None,
               cells: dict[int, int] | None = None) -> list[EdgeGrid]:
    """Resolve a grid spec (target dx and/or explicit per-edge cell counts)."""
    grids = []
    cells = cells or {}
    for e in net.edges:
        if e.id in cells:
            n = int(cells[e.id])
        elif dx_target is not None:
            n = max(2, round(e.length / dx_target))
        else:
            raise ValidationError("grid spec needs a target dx or per-edge cell counts")
        grid = EdgeGrid(e.id, n, e.length / n)
        if abs(grid.dx * n - e.length) > 1e-12:
            raise ValidationError(f"edge {e.name!r}: dx*n_cells != length")
        grids.append(grid)
    return grids


@dataclass
class DensityField:
    """One density snapshot: a cell-average array per edge (mass per unit length)."""

    values: list[np.ndarray]

    def copy(self) -> "DensityField":
        return DensityField([v.copy() for v in self.values])

    def total_mass(self, grids: list[EdgeGrid]) -> float:
        return float(sum(v.sum() * g.dx for v, g in zip(self.values, grids)))

    def __getitem__(self, edge_id: int) -> np.ndarray:
        return self.values[edge_id]


def zero_field(grids: list[EdgeGrid]) -> DensityField:
    return DensityField([np.zeros(g.n_cells) for g in grids])


def discretize_density(blocks, grids: list[EdgeGrid]) -> DensityField:
    """Exact cell averages of a sum of indicator blocks.

    ``blocks`` is a list of ``(edge_id, a, b, height)``; partial cells are
    weighted by their overlap fraction so total mass is preserved exactly.
    """
    out = zero_field(grids)
    for edge_id, a, b, height in blocks:
        g = grids[edge_id]
        if not (0.0 <= a < b <= g.length + 1e-12):
            raise ValidationError(
                f"block [{a}, {b}] outside edge {edge_id} of length {g.length}"
            )
        if height < 0:
            raise ValidationError(f"block height must be >= 0, got {height}")
        left = np.arange(g.n_cells) * g.dx
        overlap = np.clip(np.minimum(b, left + g.dx) - np.maximum(a, left), 0.0, None)
        out.values[edge_id] += height * overlap / g.dx
    return out


def tabulated_density(tables: dict[int, np.ndarray], grids: list[EdgeGrid]) -> DensityField:
    """Density given directly as one cell value per grid cell."""
    out = zero_field(grids)
    for edge_id, vals in tables.items():
        g = grids[edge_id]
        vals = np.asarray(vals, dtype=float)
        if vals.shape != (g.n_cells,):
            raise ValidationError(
                f"edge {edge_id}: expected {g.n_cells} tabulated values, got {vals.size}"
            )
        if np.any(vals < 0):
            raise ValidationError(f"edge {edge_id}: negative tabulated density")
        out.values[edge_id] = vals.copy()
    return out


@dataclass
class SpaceTimeField:
    """Full forward trajectory: density/speed per edge at every time node.

    ``times`` holds the (possibly non-uniform) node times 0 = t_0 < ... < t_N = T.
    Density and speed arrays have shape (N+1, n_cells); the speed at node n is
    the field used to advance [t_n, t_{n+1}] (the final snapshot is diagnostic).
    Boundary traces at edge heads and the head fluxes feeding each junction are
    recorded for the adjoint solve and the gradient formula.
    """

    grids: list[EdgeGrid]
    times: np.ndarray
    density: list[np.ndarray]
    speed: list[np.ndarray]
    interaction: list[np.ndarray]
    head_speed: list[np.ndarray]
    tail_speed: list[np.ndarray]
    head_interaction: list[np.ndarray]
    head_flux: list[np.ndarray]
    inflow_total: float = 0.0
    outflow_total: float = 0.0
    clipped_total: float = 0.0
    clamped_cell_steps: int = 0
    clamped_off_light: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return self.times.size

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def density_at(self, n: int) -> DensityField:
        return DensityField([d[n] for d in self.density])

    def final_density(self) -> DensityField:
        return self.density_at(self.n_nodes - 1)

    def mass_at(self, n: int) -> float:
        return float(sum(d[n].sum() * g.dx for d, g in zip(self.density, self.grids)))

    def interp_weights(self, t: float) -> tuple[int, float]:
        """Index n and weight w with t = (1-w)*t_n + w*t_{n+1}."""
        t = float(t)
        if not self.times[0] <= t <= self.times[-1]:
            raise ValidationError(f"t={t} outside stored horizon")
        n = int(np.searchsorted(self.times, t, side="right")) - 1
        n = min(max(n, 0), self.n_nodes - 2)
        dt = self.times[n + 1] - self.times[n]
        return n, float((t - self.times[n]) / dt)


def integrate_space_time(traj: SpaceTimeField, values: list[np.ndarray]) -> float:
    """Rectangular space-time quadrature with the left-endpoint rule in time.

    ``values`` must match the trajectory layout: one (N+1, n_cells) array per
    edge. The final time node carries no weight.
    """
    dts = np.diff(traj.times)
    total = 0.0
    for vals, g in zip(values, traj.grids):
        if vals.shape != (traj.n_nodes, g.n_cells):
            raise ValidationError(
                f"integrand shape {vals.shape} does not match trajectory "
                f"({traj.n_nodes}, {g.n_cells})"
            )
        total += float(dts @ vals[:-1].sum(axis=1)) * g.dx
    return total


def edge_cdf_distance(m_a: np.ndarray, m_b: np.ndarray, dx: float,
                      outflow_a: float = 0.0, outflow_b: float = 0.0) -> float:
    """L1 distance between cumulative mass profiles on one edge.

    This is the 1-D transport (Wasserstein-1) distance between the two
    cell-averaged densities. Masses must agree within 1e-9 once the mass that
    already left through the edge head (``outflow_*``, conceptually padded at
    the endpoint) is accounted for.
    """
    m_a = np.asarray(m_a, dtype=float)
    m_b = np.asarray(m_b, dtype=float)
    if m_a.shape != m_b.shape:
        raise ValidationError(f"grid mismatch: {m_a.shape} vs {m_b.shape}")
    mass_a = m_a.sum() * dx + outflow_a
    mass_b = m_b.sum() * dx + outflow_b
    if abs(mass_a - mass_b) > 1e-9:
        raise ValidationError(
            f"total masses differ ({mass_a} vs {mass_b}); "
            "pass the outflow padding to compare trajectories with sink losses"
        )
    cum = np.cumsum(m_a - m_b) * dx
    return float(np.abs(cum).sum() * dx)
