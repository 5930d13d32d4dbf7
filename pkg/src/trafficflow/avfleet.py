"""Co-simulation of the driver density and a controlled autonomous-car fleet.

Both populations share one speed field; the fleet moves at u(x,t) * v with
u in [0, 1], so it can only slow down relative to the surrounding traffic,
and splits at junctions by its own matrix Q. The drivers feel the fleet
through an interaction term built from the fleet's kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .fields import DensityField, SpaceTimeField, discretize_density, tabulated_density
from .forward import ForwardProblem, SolverConfig, run_simulation
from .scenario import FleetConfig, FleetControl, Scenario
from .velocity import KernelTables, VelocityField

LIPSCHITZ_SLACK = 1.1


def check_control_lipschitz(control: FleetControl, grids, lipschitz: float):
    """Discrete Lipschitz audit of a tabulated control field (10% slack)."""
    if control.kind == "constant":
        if not 0.0 <= control.value <= 1.0:
            raise ValidationError(f"control value {control.value} outside [0, 1]")
        return
    tg = control.time_grid
    if tg is None or control.tables is None:
        raise ValidationError("tabulated control needs a time grid and tables")
    for g in grids:
        tab = np.asarray(control.tables[g.edge], dtype=float)
        if tab.shape != (tg.size, g.n_cells):
            raise ValidationError(
                f"control table for edge {g.edge}: shape {tab.shape}, "
                f"expected ({tg.size}, {g.n_cells})"
            )
        if np.any(tab < 0.0) or np.any(tab > 1.0):
            raise ValidationError("control values must lie in [0, 1]")
        if tab.shape[1] > 1:
            dx_bound = LIPSCHITZ_SLACK * lipschitz * g.dx
            if np.any(np.abs(np.diff(tab, axis=1)) > dx_bound):
                raise ValidationError(
                    f"control on edge {g.edge} breaks the spatial Lipschitz "
                    f"bound {lipschitz}"
                )
        if tg.size > 1:
            dt_steps = np.diff(tg)
            jump = np.abs(np.diff(tab, axis=0))
            if np.any(jump > LIPSCHITZ_SLACK * lipschitz * dt_steps[:, None]):
                raise ValidationError(
                    f"control on edge {g.edge} breaks the temporal Lipschitz "
                    f"bound {lipschitz}"
                )


@dataclass
class FleetState:
    """Fleet density plus its split matrix and validated control field."""

    density: DensityField
    config: FleetConfig


class FleetRuntime:
    """Fleet side of the coupled step: slowdown term, modulated speeds, splits."""

    def __init__(self, scn: Scenario, fleet: FleetConfig):
        self.config = fleet
        self.grids = scn.grids
        rho = discretize_density(fleet.blocks, scn.grids)
        if fleet.tables:
            tab = tabulated_density(fleet.tables, scn.grids)
            for eid in range(len(scn.grids)):
                rho.values[eid] += tab.values[eid]
        self.initial = rho
        self.q_schedule = fleet.distribution
        self.control = fleet.control
        check_control_lipschitz(fleet.control, scn.grids, fleet.lipschitz)
        self.tables = None
        if fleet.kernel is not None:
            self.tables = KernelTables(scn.network, scn.grids, fleet.kernel)

    def driver_slowdown(self, mu_values):
        """Interaction term the drivers feel from the fleet; None when uncoupled."""
        if self.tables is None:
            return None
        return self.tables.interaction(mu_values)

    def fleet_velocity(self, vel: VelocityField, t: float, grids) -> VelocityField:
        """Fleet speeds u(x,t) * v(x,t) with faces rebuilt from the modulated cells."""
        cells, faces = [], []
        for g in grids:
            u = self.control.values_at(g.edge, t, g.n_cells)
            w = u * vel.cells[g.edge]
            f = np.empty(w.size + 1)
            f[1:-1] = 0.5 * (w[:-1] + w[1:])
            f[0] = u[0] * vel.faces[g.edge][0]
            f[-1] = u[-1] * vel.faces[g.edge][-1]
            cells.append(w)
            faces.append(f)
        return VelocityField(cells, faces, vel.clamp_mask)


def simulate_coupled(scn: Scenario, u=None, cfg: SolverConfig | None = None
                     ) -> tuple[SpaceTimeField, SpaceTimeField]:
    """Advance drivers and fleet together with a shared time step.

    Both densities advance explicitly from the same time level: drivers with
    the split matrix P, the fleet with Q, zero fleet inflow at sources. The
    driver trajectory is bitwise identical to the plain forward solve whenever
    the fleet exerts no slowdown (no fleet kernel, or zero fleet mass).
    """
    if scn.fleet is None:
        raise ValidationError("scenario has no [fleet] block")
    cfg = cfg or SolverConfig()
    problem = ForwardProblem(scn)
    signal = problem.resolve_signal(u)
    runtime = FleetRuntime(scn, scn.fleet)
    traj, fleet_traj = run_simulation(problem, signal, cfg, fleet=runtime)
    return traj, fleet_traj
