"""Cost functional, backward multiplier solve and the switching-duration gradient.

The multiplier solves a time-backward advection equation with source equal to
the speed field, zero terminal data, zero value at the sink, and a
transmission condition coupling the incoming edges to the outgoing one at the
merge wherever the forward speed does not vanish. The gradient with respect
to the phase durations evaluates the optimality-system bracket at every
switching time.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import UnsupportedTopologyError, ValidationError
from .fields import SpaceTimeField, integrate_space_time
from .forward import ForwardProblem, SolverConfig
from .scenario import Scenario

TRANSMISSION_EPS = 1e-9

# The multiplier of the transport system has slopes of order 1 wherever it is
# smooth; across an escape/stuck shock the discrete slope blows up like 1/dx
# and the formal product m * dlam is no longer meaningful. Slopes feeding the
# nonlocal couplings are clipped at this bound.
DLAM_BOUND = 2.0


@dataclass
class CostBreakdown:
    """Value of the objective split into its terms.

    ``total`` is the minimized quantity: minus the space-time integral of
    v*m, plus the optional feedback integral of f*m. The normalized mean
    velocity is -total / mass_integral.
    """

    total: float
    mean_velocity_term: float
    feedback_term: float
    mass_integral: float
    normalized_mean_velocity: float | None


@dataclass
class AdjointField:
    """Multiplier values per edge per time node, solved backward from T."""

    times: np.ndarray
    lam: list[np.ndarray]


def evaluate_cost(traj: SpaceTimeField, feedback=None, normalize: bool = True) -> CostBreakdown:
    """Rectangular-rule cost of a recorded trajectory.

    ``feedback`` is an optional integrand ``f(edge_id, x_centers, t) -> array``
    added as the integral of f*m. With ``normalize`` the mass integral must be
    positive.
    """
    vm = [traj.speed[g.edge] * traj.density[g.edge] for g in traj.grids]
    mean_term = -integrate_space_time(traj, vm)
    mass = integrate_space_time(traj, traj.density)

    fb_term = 0.0
    if feedback is not None:
        fb = []
        for g in traj.grids:
            vals = np.stack([
                np.broadcast_to(
                    np.asarray(feedback(g.edge, g.centers, t), dtype=float),
                    (g.n_cells,),
                )
                for t in traj.times
            ])
            fb.append(vals * traj.density[g.edge])
        fb_term = integrate_space_time(traj, fb)

    total = mean_term + fb_term
    vbar = None
    if normalize:
        if mass <= 0.0:
            raise ValidationError(
                "normalized mean velocity undefined: the mass integral is zero"
            )
        vbar = -total / mass
    return CostBreakdown(total, mean_term, fb_term, mass, vbar)


def _one_sided_dlam(lam: np.ndarray, dx: float) -> np.ndarray:
    """Downstream one-sided slope, falling back to the interior at the head cell."""
    d = np.empty_like(lam)
    d[:-1] = (lam[1:] - lam[:-1]) / dx
    d[-1] = (lam[-1] - lam[-2]) / dx
    return d


def nonlocal_adjoint_terms(net, grids, kernel, m_values, lam_values,
                           active_mask=None):
    """Backward counterparts of the interaction term: (nu*m, nu*(m dlam/dx)).

    The reversed kernel integrates over the upstream cells y whose visual
    field contains x. Both terms enter the backward equation as sources.
    ``active_mask`` (one boolean array per edge) restricts the coupling to
    cells where the speed clamp is inactive: a cell pinned at zero speed
    does not react to downstream density changes.
    """
    from .velocity import KernelTables

    tables = KernelTables(net, grids, kernel)
    if active_mask is None:
        m_active = list(m_values)
    else:
        m_active = [m * mask for m, mask in zip(m_values, active_mask)]
    nu_m = tables.reversed_conv(m_active)
    phi = [m * np.clip(_one_sided_dlam(lam, g.dx), -DLAM_BOUND, DLAM_BOUND)
           for m, lam, g in zip(m_active, lam_values, grids)]
    nu_mdl = tables.reversed_conv(phi)
    return nu_m, nu_mdl


def _merge_out_edge(net) -> dict[str, int]:
    """Outgoing edge of every junction; rejects non-merge topologies."""
    out = {}
    for v in net.junctions:
        if len(net.out[v]) != 1:
            raise UnsupportedTopologyError(
                f"junction {v} has {len(net.out[v])} outgoing edges; the "
                "backward solve is derived for merges (N incoming, 1 outgoing)"
            )
        out[v] = net.out[v][0]
    return out


def solve_adjoint(scn: Scenario, traj: SpaceTimeField,
                  problem: ForwardProblem | None = None) -> AdjointField:
    """Backward upwind integration of the multiplier along the stored history.

    Walks the forward time grid in reverse; each interval reuses the speed
    snapshot that advanced it. The downstream ghost value per edge comes from
    the sink condition or the merge transmission condition.
    """
    problem = problem or ForwardProblem(scn)
    net, grids = problem.net, problem.grids
    merge_out = _merge_out_edge(net)
    times = traj.times
    n_nodes = times.size
    if n_nodes < 2:
        raise ValidationError("trajectory must store the full forward history")

    tables = problem.tables
    lam_hist = [np.zeros((n_nodes, g.n_cells)) for g in grids]

    lam_next = [np.zeros(g.n_cells) for g in grids]
    for n in range(n_nodes - 2, -1, -1):
        dt = times[n + 1] - times[n]
        ghosts = np.zeros(len(grids))
        for e in net.edges:
            if e.head in net.sinks:
                ghosts[e.id] = 0.0
                continue
            out_id = merge_out[e.head]
            v_head = traj.head_speed[e.id][n]
            if v_head > TRANSMISSION_EPS:
                ghosts[e.id] = (
                    lam_next[out_id][0] * traj.tail_speed[out_id][n] / v_head
                )
            else:
                # condition vacuous at a stopped head: continue the interior
                # slope (the multiplier has a steep linear layer at a red light)
                lam = lam_next[e.id]
                ghosts[e.id] = 2.0 * lam[-1] - lam[-2]

        if tables is not None:
            # cells pinned at zero speed do not feel downstream density
            m_vals = [traj.density[g.edge][n] * (traj.speed[g.edge][n] > 0.0)
                      for g in grids]
            nu_m = tables.reversed_conv(m_vals)
            phi = [m_vals[g.edge]
                   * np.clip(_one_sided_dlam(lam_next[g.edge], g.dx),
                             -DLAM_BOUND, DLAM_BOUND)
                   for g in grids]
            nu_mdl = tables.reversed_conv(phi)

        lam_prev = []
        for g in grids:
            e = g.edge
            v = traj.speed[e][n]
            src = v.copy()
            if tables is not None:
                src += nu_m[e] + nu_mdl[e]
            lam_prev.append(
                kernels.adjoint_step(lam_next[e], v, src, ghosts[e], dt, g.dx)
            )
        lam_next = lam_prev
        for g in grids:
            lam_hist[g.edge][n] = lam_next[g.edge]

    return AdjointField(times, lam_hist)


def _interp(arr: np.ndarray, n: int, w: float) -> np.ndarray:
    return (1.0 - w) * arr[n] + w * arr[n + 1]


def duration_gradient(scn: Scenario, traj: SpaceTimeField, adj: AdjointField,
                      sched, problem: ForwardProblem | None = None,
                      clamp_aware: bool = True) -> np.ndarray:
    """Analytic gradient of the cost with respect to the phase durations.

    Each genuine switching time inside (0, horizon) contributes the bracket
    of the optimality system, evaluated on time-interpolated snapshots;
    moving duration k shifts every later switch, so component k accumulates
    the contributions of switches k, k+1, .... Durations whose switches fall
    outside the horizon (including the final, inert one) get zero.

    The bracket per lighted edge has a volume part, the ramp against
    (1 + dlam/dx) over the edge, and a junction-capture part: the boundary
    flux released or withheld at the vertex, valued at the multiplier gap
    between the outgoing edge and the (post-switch) lighted edge. The
    multiplier trace on a lighted edge jumps across its own switch, so the
    capture term reads it on the post-switch side, where the transmission
    condition no longer ties it to the outgoing edge.

    The discrete cost is a staircase in each switching time (the signal is
    sampled on the forward time grid), and the escaping flux can collapse
    within a couple of steps when a queue tail clears the vertex. The capture
    factor is therefore averaged over the central-difference stencil
    [tau - 2 dt, tau + 2 dt]: recorded traces on the past side, the profile
    advected at the green head speed on the counterfactual side.

    With ``clamp_aware`` the ramp is capped at the available speed headroom
    ``max(v_f - v_i, 0)``: where the nonnegativity clamp is active the signal
    cannot slow traffic any further, so those cells carry no sensitivity.
    """
    problem = problem or ForwardProblem(scn)
    if scn.light is None:
        raise ValidationError("scenario has no light to differentiate")
    signal = problem.resolve_signal(sched)
    horizon = scn.horizon
    net = problem.net

    n_dur = sched.n_durations
    dj_dtau = np.zeros(n_dur + 1)
    truncated = sum(1 for tau in sched.switch_times()[:-1] if tau >= horizon)
    if truncated:
        warnings.warn(
            f"{truncated} switching time(s) at or beyond the horizon are inert; "
            "their gradient components are zero",
            stacklevel=2,
        )

    edges = [(scn.light.edge, 1.0)]
    if scn.light.complement_edge is not None:
        edges.append((scn.light.complement_edge, -1.0))
    vertex = scn.light.vertex
    out_id = net.out[vertex][0] if vertex in net.junctions else None
    offsets = np.array([0.125, 0.375, 0.625, 0.875])

    def lam_out_at(t):
        if out_id is None:
            return 0.0
        n, w = traj.interp_weights(t)
        return float(_interp(adj.lam[out_id], n, w)[0])

    for tau, j, pre_state in signal.switches:
        n, w = traj.interp_weights(tau)
        dt_local = float(traj.times[n + 1] - traj.times[n])
        half = 2.0 * dt_local
        bracket = 0.0
        for eid, sign in edges:
            g = problem.grids[eid]
            m_tau = _interp(traj.density[eid], n, w)
            # the multiplier regime flips with the signal: read it on the
            # post-switch side, which is the base control's future at tau
            lam_tau = adj.lam[eid][n + 1]
            dlam = np.clip(_one_sided_dlam(lam_tau, g.dx), -DLAM_BOUND, DLAM_BOUND)
            ramp = problem.ramps[eid]
            if clamp_aware:
                vi_tau = _interp(traj.interaction[eid], n, w)
                headroom = np.maximum(problem.vf_cells[eid] - vi_tau, 0.0)
                ramp = np.minimum(ramp, headroom)
            volume = float(np.sum(ramp * (dlam + 1.0) * m_tau)) * g.dx

            # capture: boundary flux caught by the falling red. On the edge
            # whose light rises the transmission condition makes the
            # multiplier gap vanish, so only the falling edge contributes.
            # The flux factor is averaged over the nodes of the central
            # finite-difference stencil: the recorded head flux before the
            # switch, and after it the head trace released at the green
            # speed (a red head piles arriving mass, so the trace tracks the
            # flux the extended green would have let through).
            falling = (pre_state == 0) if sign > 0 else (pre_state == 1)
            capture = 0.0
            if falling:
                ramp_head = problem.ramp_head[eid]
                if clamp_aware:
                    vi_head = float(_interp(traj.head_interaction[eid], n, w))
                    ramp_head = min(ramp_head, max(problem.vf_head[eid] - vi_head, 0.0))
                # stuck-value of mass held at the vertex through the red phase
                lam_post = float(adj.lam[eid][n + 1][-1])
                lo = np.searchsorted(traj.times, tau - half, side="right")
                hi = np.searchsorted(traj.times, tau + half, side="left")
                hi = min(hi, traj.times.size - 1)
                samples = []
                for k in range(lo, hi):
                    t_k = traj.times[k]
                    if t_k < tau and k < traj.head_flux[eid].size:
                        flux = float(traj.head_flux[eid][k])
                    else:
                        flux = float(traj.density[eid][k][-1]) * ramp_head
                    samples.append(flux * (lam_post - lam_out_at(t_k)))
                if samples:
                    capture = float(np.mean(samples))

            bracket += sign * (volume - capture)
        dj_dtau[j] = (2 * pre_state - 1) * bracket

    # moving s_k shifts tau_k, tau_{k+1}, ...: accumulate later switches
    grad = np.cumsum(dj_dtau[::-1])[::-1][1:]
    return grad


def finite_difference_gradient(scn: Scenario, sched, delta: float,
                               cfg: SolverConfig | None = None,
                               problem: ForwardProblem | None = None) -> np.ndarray:
    """Central finite differences of the cost in the duration vector.

    Independent oracle for :func:`duration_gradient`: each component reruns
    the forward solve at s_k +/- delta (no projection applied).
    """
    from .forward import simulate_forward

    cfg = cfg or SolverConfig()
    problem = problem or ForwardProblem(scn)
    base = np.asarray(sched.durations, dtype=float)
    grad = np.empty_like(base)
    for k in range(base.size):
        costs = []
        for shift in (delta, -delta):
            s = base.copy()
            s[k] += shift
            traj = simulate_forward(
                scn, sched.replace_durations(s), cfg=cfg, problem=problem
            )
            costs.append(evaluate_cost(traj, normalize=False).total)
        grad[k] = (costs[0] - costs[1]) / (2.0 * delta)
    return grad
