"""Projected gradient descent over switching durations, multi-start, sweeps."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adjoint import duration_gradient, evaluate_cost, solve_adjoint
from .control import SwitchSchedule, project_durations
from .errors import ValidationError
from .forward import ForwardProblem, SolverConfig, simulate_forward
from .scenario import Scenario

ARMIJO = 1e-4
MAX_HALVINGS = 20
GRAD_FLOOR = 1e-10


@dataclass
class DescentReport:
    """Trace of one projected-gradient run; accepted costs never increase."""

    iterates: list = field(default_factory=list)
    betas: list = field(default_factory=list)
    termination: str = ""
    best_durations: np.ndarray | None = None
    best_cost: float = np.inf
    u0: int = 0
    n_forward_solves: int = 0
    clamp_warnings: list = field(default_factory=list)
    start_index: int = 0

    def record(self, s: np.ndarray, cost: float, beta: float):
        self.iterates.append((s.copy(), cost))
        self.betas.append(beta)
        if cost < self.best_cost:
            self.best_cost = cost
            self.best_durations = s.copy()


def _require_light_problem(scn: Scenario):
    if scn.light is None or scn.light.schedule is None:
        raise ValidationError(
            "optimization needs a scenario with a light and a schedule template"
        )


def descend(scn: Scenario, s0: SwitchSchedule, eps: float = 1e-8,
            beta0: float = 1.0, max_iter: int = 200,
            cfg: SolverConfig | None = None,
            problem: ForwardProblem | None = None) -> DescentReport:
    """Forward/backward sweeps with projected gradient steps and backtracking.

    Each iteration solves the forward system, the backward multiplier and the
    duration gradient, then halves the step until the projected trial point
    achieves sufficient decrease. Stops on |dJ| < eps, a vanishing projected
    gradient, an exhausted line search, or the iteration cap.
    """
    if s0.t_green is None:
        raise ValidationError("descend needs box constraints (t_green, t_red) on s0")
    if eps <= 0 or beta0 <= 0 or max_iter < 1:
        raise ValidationError("need eps > 0, beta0 > 0, max_iter >= 1")
    cfg = cfg or SolverConfig()
    problem = problem or ForwardProblem(scn)

    sched = s0.projected()
    report = DescentReport(u0=sched.u0)

    traj = simulate_forward(scn, sched, cfg=cfg, problem=problem)
    report.n_forward_solves += 1
    cost = evaluate_cost(traj, normalize=False).total
    report.record(sched.durations, cost, 0.0)
    _note_clamps(report, traj, 0)

    for it in range(1, max_iter + 1):
        adj = solve_adjoint(scn, traj, problem=problem)
        grad = duration_gradient(scn, traj, adj, sched, problem=problem)
        if np.max(np.abs(grad)) < GRAD_FLOOR:
            report.termination = "tolerance"
            return report

        beta = beta0
        accepted = None
        for _ in range(MAX_HALVINGS):
            trial = project_durations(sched.durations - beta * grad,
                                      sched.t_green, sched.t_red)
            if np.array_equal(trial, sched.durations):
                beta *= 0.5
                continue
            trial_sched = sched.replace_durations(trial)
            trial_traj = simulate_forward(scn, trial_sched, cfg=cfg, problem=problem)
            report.n_forward_solves += 1
            trial_cost = evaluate_cost(trial_traj, normalize=False).total
            if trial_cost <= cost - ARMIJO * float(grad @ (sched.durations - trial)):
                accepted = (trial_sched, trial_traj, trial_cost, beta)
                break
            beta *= 0.5
        if accepted is None:
            report.termination = "line-search-failure"
            return report

        sched, traj, new_cost, beta = accepted
        decrease = cost - new_cost
        cost = new_cost
        report.record(sched.durations, cost, beta)
        _note_clamps(report, traj, it)
        if decrease < eps:
            report.termination = "tolerance"
            return report

    report.termination = "max-iter"
    return report


def _note_clamps(report: DescentReport, traj, iteration: int):
    if traj.clamped_off_light:
        report.clamp_warnings.append(
            f"iteration {iteration}: speed clamp active outside the light ramp "
            f"in {traj.clamped_off_light} cell-steps (gradient ignores the clamp)"
        )


@dataclass
class MultiStartResult:
    """Best descent report over random restarts, all runs retrievable."""

    best: DescentReport
    reports: list
    seed: int


def multi_start(scn: Scenario, n_starts: int, seed: int, eps: float = 1e-8,
                beta0: float = 1.0, max_iter: int = 200,
                cfg: SolverConfig | None = None) -> MultiStartResult:
    """Seeded uniform restarts in the duration box; lowest cost wins, first-found ties."""
    _require_light_problem(scn)
    if n_starts < 1:
        raise ValidationError("n_starts must be >= 1")
    template = scn.light.schedule
    if template.t_green is None:
        raise ValidationError("scenario schedule must declare t_green/t_red")
    rng = np.random.default_rng(seed)
    draws = rng.uniform(template.t_green, template.t_red,
                        size=(n_starts, template.n_durations))
    problem = ForwardProblem(scn)

    reports = []
    best = None
    for idx in range(n_starts):
        s0 = SwitchSchedule(template.u0, draws[idx], template.t_green, template.t_red)
        rep = descend(scn, s0, eps=eps, beta0=beta0, max_iter=max_iter,
                      cfg=cfg, problem=problem)
        rep.start_index = idx
        reports.append(rep)
        if best is None or rep.best_cost < best.best_cost:
            best = rep
    return MultiStartResult(best, reports, seed)


@dataclass
class SweepResult:
    """Single-switch exhaustive search: tau samples with cost and mean velocity."""

    taus: np.ndarray
    costs: np.ndarray
    vbars: np.ndarray

    @property
    def argmax_indices(self) -> np.ndarray:
        return np.flatnonzero(self.vbars == self.vbars.max())

    def plateau_indices(self, rel_tol: float = 0.005) -> np.ndarray:
        """Samples within rel_tol of the best mean velocity."""
        return np.flatnonzero(self.vbars >= self.vbars.max() * (1.0 - rel_tol))


def sweep_single_switch(scn: Scenario, n_samples: int,
                        cfg: SolverConfig | None = None) -> SweepResult:
    """Cost of the one-switch control u = u0 on [0, tau) for uniform tau in (0, T)."""
    if scn.light is None:
        raise ValidationError("sweep needs a scenario with a light")
    if n_samples < 3:
        raise ValidationError("n_samples must be >= 3")
    cfg = cfg or SolverConfig()
    u0 = scn.light.schedule.u0 if scn.light.schedule is not None else 1
    problem = ForwardProblem(scn)
    T = scn.horizon

    taus = np.linspace(0.0, T, n_samples + 2)[1:-1]
    costs = np.empty(n_samples)
    vbars = np.empty(n_samples)
    for i, tau in enumerate(taus):
        sched = SwitchSchedule(u0, np.array([tau, T - tau]))
        traj = simulate_forward(scn, sched, cfg=cfg, problem=problem)
        cb = evaluate_cost(traj)
        costs[i] = cb.total
        vbars[i] = cb.normalized_mean_velocity
    return SweepResult(taus, costs, vbars)
