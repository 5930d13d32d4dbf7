"""Conservative finite-volume transport on the network with junction flux splitting.

Per edge the scheme is an explicit TVD update with a flux limiter; junctions
couple edges at the flux level: the inflow flux of an outgoing edge is the
split-matrix combination of the incoming head fluxes. Terminal edges release
mass through a free-outflow head face.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .control import StepSignal, SwitchSchedule, reconstruct_control
from .errors import CFLError, SolverError, ValidationError
from .fields import DensityField, SpaceTimeField
from .scenario import Scenario
from .velocity import KernelTables, VelocityField, light_ramp

SPEED_FLOOR = 1e-12


@dataclass
class SolverConfig:
    """Numerical knobs: CFL number, flux limiter, output thinning stride."""

    cfl_number: float = 0.99
    limiter: str = "superbee"
    record_stride: int = 1

    def __post_init__(self):
        if not 0.0 < self.cfl_number <= 1.0:
            raise ValidationError(f"cfl_number must lie in (0, 1], got {self.cfl_number}")
        if self.limiter not in kernels.LIMITER_IDS:
            raise ValidationError(
                f"limiter must be one of {sorted(kernels.LIMITER_IDS)}, got {self.limiter!r}"
            )
        if self.record_stride < 1:
            raise ValidationError("record_stride must be >= 1")

    @property
    def limiter_id(self) -> int:
        return kernels.LIMITER_IDS[self.limiter]


def limited_flux(stencil, v_face: float, dx: float, dt: float,
                 limiter: str = "superbee") -> float:
    """Reference scalar face flux for a nonnegative face speed.

    ``stencil`` holds (m_uu, m_up, m_down, m_dd) around the face; the second
    entry is the upwind cell. Entries marked nan denote missing neighbours
    (edge boundary) and force first-order upwind.
    """
    if v_face < 0:
        raise ValidationError("face speed must be nonnegative (upwind = left)")
    m_uu, m_up, m_down, _ = (float(s) for s in stencil)
    flux = v_face * m_up
    if limiter == "none" or np.isnan(m_uu) or np.isnan(m_down):
        return flux
    denom = m_down - m_up
    if denom == 0.0:
        return flux
    theta = (m_up - m_uu) / denom
    if limiter == "superbee":
        phi = max(0.0, min(1.0, 2.0 * theta), min(2.0, theta))
    elif limiter == "minmod":
        phi = max(0.0, min(1.0, theta))
    else:
        raise ValidationError(f"unknown limiter {limiter!r}")
    return flux + v_face * 0.5 * phi * (1.0 - v_face * dt / dx) * denom


@dataclass
class StepInfo:
    """Per-step bookkeeping returned by :func:`advance_step`."""

    head_fluxes: np.ndarray
    inflow_mass: float
    outflow_mass: float
    clipped_mass: float


def advance_step(net, grids, state: DensityField, vel: VelocityField,
                 p_matrix: np.ndarray, inflow_rates: dict[str, float],
                 dt: float, cfg: SolverConfig) -> tuple[DensityField, StepInfo]:
    """One conservative step of every edge with junction flux coupling.

    ``p_matrix`` is the dense split matrix active over the step;
    ``inflow_rates`` maps source vertices to boundary flux rates. Raises
    :class:`CFLError` when dt exceeds the stability bound on any edge.
    """
    lim = cfg.limiter_id
    for g in grids:
        vmax = vel.faces[g.edge].max()
        if dt * vmax > cfg.cfl_number * g.dx * (1.0 + 1e-12):
            raise CFLError(
                f"dt={dt} violates CFL on edge {net.edges[g.edge].name}: "
                f"max face speed {vmax}, dx {g.dx}, cfl {cfg.cfl_number}"
            )

    fluxes = [kernels.edge_fluxes(state.values[g.edge], vel.faces[g.edge], dt, g.dx, lim)
              for g in grids]
    head = np.array([F[-1] for F in fluxes])

    inflow_mass = 0.0
    outflow_mass = 0.0
    for e in net.edges:
        if e.tail in net.sources:
            rate = inflow_rates.get(e.tail, 0.0)
            fluxes[e.id][0] = rate
            inflow_mass += rate * dt
        else:
            coupled = 0.0
            for k in net.inc[e.tail]:
                p = p_matrix[k, e.id]
                if p:
                    coupled += p * head[k]
            fluxes[e.id][0] = coupled
        if e.head in net.sinks:
            outflow_mass += head[e.id] * dt

    new_values = []
    clipped = 0.0
    for g in grids:
        m_new, clip = kernels.apply_fluxes(state.values[g.edge], fluxes[g.edge], dt, g.dx)
        new_values.append(m_new)
        clipped += clip
    return DensityField(new_values), StepInfo(head, inflow_mass, outflow_mass, clipped)


class ForwardProblem:
    """Scenario compiled for time stepping: cached grids, kernels, ramps, splits."""

    def __init__(self, scn: Scenario):
        self.scn = scn
        self.net = scn.network
        self.grids = scn.grids
        self.n_edges = len(self.net.edges)

        self.vf_cells = [scn.vf_at(g.edge, g.centers) for g in self.grids]
        self.vf_tail = np.array(
            [float(scn.vf_at(g.edge, np.array([0.0]))[0]) for g in self.grids]
        )
        self.vf_head = np.array(
            [float(scn.vf_at(g.edge, np.array([g.length]))[0]) for g in self.grids]
        )
        self.vf_max = scn.vf_max()

        self.tables = KernelTables(self.net, self.grids, scn.kernel) if scn.kernel else None

        # signal-scaled slowdown ramps on the lighted edge and its complement
        self.ramps: dict[int, np.ndarray] = {}
        self.ramp_head: dict[int, float] = {}
        self.light_sign: dict[int, int] = {}
        if scn.light is not None:
            lt = scn.light
            self.ramps[lt.edge] = light_ramp(self.grids[lt.edge], lt.radius,
                                             self.vf_cells[lt.edge])
            self.ramp_head[lt.edge] = self.vf_head[lt.edge]
            self.light_sign[lt.edge] = +1
            if lt.complement_edge is not None:
                ce = lt.complement_edge
                self.ramps[ce] = light_ramp(self.grids[ce], lt.radius, self.vf_cells[ce])
                self.ramp_head[ce] = self.vf_head[ce]
                self.light_sign[ce] = -1

        self.min_dx = scn.min_dx()

    def resolve_signal(self, u) -> StepSignal | None:
        if u is None:
            if self.scn.light is None:
                return None
            if self.scn.light.schedule is None:
                raise ValidationError(
                    "scenario has a light but no schedule; pass a control signal"
                )
            return reconstruct_control(self.scn.light.schedule, self.scn.horizon)
        if self.scn.light is None:
            raise ValidationError("control signal given but the scenario has no light")
        if isinstance(u, SwitchSchedule):
            return reconstruct_control(u, self.scn.horizon)
        if isinstance(u, StepSignal):
            if u.horizon < self.scn.horizon:
                raise ValidationError("signal horizon shorter than scenario horizon")
            return u
        raise ValidationError(f"unsupported control type {type(u).__name__}")

    def signal_value(self, edge_id: int, u_primary: float) -> float:
        sign = self.light_sign.get(edge_id)
        if sign is None:
            return 0.0
        return u_primary if sign > 0 else 1.0 - u_primary

    def velocity_at(self, m_values, u_primary: float, external=None):
        """Assemble the clamped speed field; ``external`` adds a fleet term."""
        has_kernel = self.tables is not None
        if has_kernel:
            vi, vi_head, vi_tail = self.tables.interaction(m_values)
        else:
            vi = [np.zeros(g.n_cells) for g in self.grids]
            vi_head = np.zeros(self.n_edges)
            vi_tail = np.zeros(self.n_edges)

        cells, faces, masks = [], [], []
        for g in self.grids:
            e = g.edge
            raw = self.vf_cells[e] - vi[e] if has_kernel else self.vf_cells[e].copy()
            head_raw = self.vf_head[e] - vi_head[e]
            tail_raw = self.vf_tail[e] - vi_tail[e]
            u_e = self.signal_value(e, u_primary)
            if u_e:
                raw = raw - u_e * self.ramps[e]
                head_raw -= u_e * self.ramp_head[e]
            if external is not None:
                ext_cells, ext_head, ext_tail = external
                raw = raw - ext_cells[e]
                head_raw -= ext_head[e]
                tail_raw -= ext_tail[e]
            mask = raw < 0.0
            v = np.where(mask, 0.0, raw)
            f = np.empty(v.size + 1)
            f[1:-1] = 0.5 * (v[:-1] + v[1:])
            f[0] = max(tail_raw, 0.0)
            f[-1] = max(head_raw, 0.0)
            cells.append(v)
            faces.append(f)
            masks.append(mask)
        return VelocityField(cells, faces, masks), vi, vi_head

    def off_ramp_clamps(self, vel: VelocityField) -> int:
        count = 0
        for g in self.grids:
            mask = vel.clamp_mask[g.edge]
            if not mask.any():
                continue
            ramp = self.ramps.get(g.edge)
            if ramp is None:
                count += int(mask.sum())
            else:
                count += int((mask & (ramp == 0.0)).sum())
        return count


@dataclass
class _Recorder:
    """Accumulates per-node snapshots, stacked once at the end of the run."""

    grids: list
    times: list = field(default_factory=list)
    density: list = None
    speed: list = None
    interaction: list = None
    head_speed: list = None
    tail_speed: list = None
    head_interaction: list = None
    head_flux: list = None

    def __post_init__(self):
        n = len(self.grids)
        self.density = [[] for _ in range(n)]
        self.speed = [[] for _ in range(n)]
        self.interaction = [[] for _ in range(n)]
        self.head_speed = [[] for _ in range(n)]
        self.tail_speed = [[] for _ in range(n)]
        self.head_interaction = [[] for _ in range(n)]
        self.head_flux = [[] for _ in range(n)]

    def node(self, t, m_values, vel: VelocityField, vi, vi_head):
        self.times.append(t)
        for e in range(len(self.grids)):
            self.density[e].append(m_values[e])
            self.speed[e].append(vel.cells[e])
            self.interaction[e].append(vi[e])
            self.head_speed[e].append(vel.faces[e][-1])
            self.tail_speed[e].append(vel.faces[e][0])
            self.head_interaction[e].append(vi_head[e])

    def step_flux(self, head_fluxes):
        for e in range(len(self.grids)):
            self.head_flux[e].append(head_fluxes[e])

    def build(self, **meta) -> SpaceTimeField:
        return SpaceTimeField(
            grids=self.grids,
            times=np.array(self.times),
            density=[np.stack(d) for d in self.density],
            speed=[np.stack(s) for s in self.speed],
            interaction=[np.stack(s) for s in self.interaction],
            head_speed=[np.array(h) for h in self.head_speed],
            tail_speed=[np.array(h) for h in self.tail_speed],
            head_interaction=[np.array(h) for h in self.head_interaction],
            head_flux=[np.array(h) for h in self.head_flux],
            **meta,
        )


def _check_finite(m_values, t, net):
    for e, arr in enumerate(m_values):
        if not np.all(np.isfinite(arr)):
            bad = np.flatnonzero(~np.isfinite(arr))
            raise SolverError(
                f"non-finite density at t={t} on edge {net.edges[e].name}, "
                f"cells {bad[:5].tolist()} (showing up to 5); "
                f"min={np.nanmin(arr)}, max={np.nanmax(arr)}"
            )


def run_simulation(problem: ForwardProblem, signal: StepSignal | None,
                   cfg: SolverConfig, fleet=None):
    """Shared explicit time loop for the plain and fleet-coupled systems."""
    scn = problem.scn
    net, grids = problem.net, problem.grids
    T = scn.horizon

    m = [arr.copy() for arr in scn.initial_density().values]
    rec = _Recorder(grids)
    frec = None
    mu = None
    if fleet is not None:
        mu = [arr.copy() for arr in fleet.initial.values]
        frec = _Recorder(grids)

    inflow_total = outflow_total = clipped_total = 0.0
    f_outflow_total = f_clipped_total = 0.0
    clamp_steps = 0
    clamp_off = 0

    t = 0.0
    guard = 1e-12 * max(T, 1.0)
    state = DensityField(m)
    fstate = DensityField(mu) if mu is not None else None

    while True:
        u_val = signal(t) if signal is not None else 0.0
        external = fleet.driver_slowdown(fstate.values) if fleet is not None else None
        vel, vi, vi_head = problem.velocity_at(state.values, u_val, external)
        rec.node(t, state.values, vel, vi, vi_head)

        fleet_vel = None
        if fleet is not None:
            fleet_vel = fleet.fleet_velocity(vel, t, grids)
            frec.node(t, fstate.values, fleet_vel, vi, vi_head)

        if vel.clamped_anywhere:
            clamp_steps += 1
            clamp_off += problem.off_ramp_clamps(vel)

        if t >= T - guard:
            break

        vmax = max(vel.max_face_speed(g.edge) / g.dx for g in grids)
        if vmax <= SPEED_FLOOR:
            dt = cfg.cfl_number * problem.min_dx / problem.vf_max
        else:
            dt = cfg.cfl_number / vmax
        dt = min(dt, T - t)

        p_mat = scn.distribution.matrix_at(t)
        rates = {v: scn.inflow.rate_at(v, t) for v in net.sources}
        state, info = advance_step(net, grids, state, vel, p_mat, rates, dt, cfg)
        rec.step_flux(info.head_fluxes)
        inflow_total += info.inflow_mass
        outflow_total += info.outflow_mass
        clipped_total += info.clipped_mass

        if fleet is not None:
            q_mat = fleet.q_schedule.matrix_at(t)
            fstate, finfo = advance_step(net, grids, fstate, fleet_vel, q_mat, {}, dt, cfg)
            frec.step_flux(finfo.head_fluxes)
            f_outflow_total += finfo.outflow_mass
            f_clipped_total += finfo.clipped_mass

        t += dt
        _check_finite(state.values, t, net)
        if fleet is not None:
            _check_finite(fstate.values, t, net)

    traj = rec.build(
        inflow_total=inflow_total, outflow_total=outflow_total,
        clipped_total=clipped_total, clamped_cell_steps=clamp_steps,
        clamped_off_light=clamp_off,
    )
    _check_mass_balance(traj, net)

    if fleet is None:
        return traj, None
    ftraj = frec.build(
        inflow_total=0.0, outflow_total=f_outflow_total,
        clipped_total=f_clipped_total,
    )
    _check_mass_balance(ftraj, net)
    return traj, ftraj


def _check_mass_balance(traj: SpaceTimeField, net):
    mass0 = traj.mass_at(0)
    massT = traj.mass_at(traj.n_nodes - 1)
    lhs = massT + traj.outflow_total
    rhs = mass0 + traj.inflow_total + traj.clipped_total
    scale = max(rhs, 1e-12)
    if abs(lhs - rhs) > 1e-8 * scale:
        raise SolverError(
            f"mass balance broken: final+outflow={lhs!r} vs "
            f"initial+inflow+clipped={rhs!r}"
        )
    traj.meta["mass_balance_error"] = abs(lhs - rhs) / scale


def simulate_forward(scn: Scenario, u=None, cfg: SolverConfig | None = None,
                     problem: ForwardProblem | None = None) -> SpaceTimeField:
    """Integrate the scenario forward and record the full trajectory.

    ``u`` overrides the scenario's light schedule (a :class:`SwitchSchedule`
    or a prebuilt :class:`StepSignal`); pass ``problem`` to reuse the compiled
    scenario across many runs.
    """
    cfg = cfg or SolverConfig()
    problem = problem or ForwardProblem(scn)
    signal = problem.resolve_signal(u)
    traj, _ = run_simulation(problem, signal, cfg)
    return traj
