"""Traffic-light switching schedules: duration vectors, binary signals, feasibility.

A schedule is an initial light state plus a vector of phase durations; the
signal alternates between red (1) and green (0) at the cumulative switching
times. Durations live in a box [t_green, t_red]: a green phase must last at
least t_green, no phase may exceed t_red.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


@dataclass
class SwitchSchedule:
    """Light state u0 at t=0 plus durations of the successive phases."""

    u0: int
    durations: np.ndarray
    t_green: float | None = None
    t_red: float | None = None

    def __post_init__(self):
        if self.u0 not in (0, 1):
            raise ValidationError(f"u0 must be 0 (green) or 1 (red), got {self.u0}")
        self.durations = np.asarray(self.durations, dtype=float)
        if self.durations.ndim != 1 or self.durations.size == 0:
            raise ValidationError("durations must be a non-empty 1-D vector")
        if np.any(self.durations <= 0):
            raise ValidationError(f"durations must be positive, got {self.durations}")
        if (self.t_green is None) != (self.t_red is None):
            raise ValidationError("t_green and t_red must be given together")
        if self.t_green is not None and not 0 < self.t_green < self.t_red:
            raise ValidationError(
                f"need 0 < t_green < t_red, got ({self.t_green}, {self.t_red})"
            )

    @property
    def n_durations(self) -> int:
        return self.durations.size

    def switch_times(self) -> np.ndarray:
        """Cumulative times tau_i = s_1 + ... + s_i."""
        return np.cumsum(self.durations)

    def states(self) -> np.ndarray:
        """Alternating states u_0, u_1, ..., u_{S-1}, one per duration."""
        s = np.empty(self.durations.size, dtype=int)
        s[0] = self.u0
        for i in range(1, s.size):
            s[i] = 1 - s[i - 1]
        return s

    def projected(self) -> "SwitchSchedule":
        if self.t_green is None:
            return self
        return SwitchSchedule(
            self.u0,
            project_durations(self.durations, self.t_green, self.t_red),
            self.t_green,
            self.t_red,
        )

    def replace_durations(self, s) -> "SwitchSchedule":
        return SwitchSchedule(self.u0, np.asarray(s, float), self.t_green, self.t_red)


@dataclass
class StepSignal:
    """Right-continuous piecewise-constant signal on [0, T].

    ``breakpoints`` has one more entry than ``values``; the k-th interval is
    ``[breakpoints[k], breakpoints[k+1])`` and the final interval is closed.
    ``switches`` lists (time, duration_index, pre_state) of the genuine jumps
    inside (0, T).
    """

    breakpoints: np.ndarray
    values: np.ndarray
    switches: list = field(default_factory=list)

    def __post_init__(self):
        self.breakpoints = np.asarray(self.breakpoints, dtype=float)
        self.values = np.asarray(self.values)
        if self.breakpoints.size != self.values.size + 1:
            raise ValidationError("need exactly one more breakpoint than values")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ValidationError("breakpoints must be strictly increasing")

    @property
    def horizon(self) -> float:
        return float(self.breakpoints[-1])

    def __call__(self, t: float) -> float:
        if not 0.0 <= t <= self.horizon:
            raise ValidationError(f"t={t} outside [0, {self.horizon}]")
        idx = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        idx = min(max(idx, 0), self.values.size - 1)
        return float(self.values[idx])

    def complement(self) -> "StepSignal":
        return StepSignal(self.breakpoints.copy(), 1 - self.values, list(self.switches))


def reconstruct_control(sched: SwitchSchedule, horizon: float) -> StepSignal:
    """Rebuild the binary signal u(t) on [0, horizon] from a schedule.

    The state alternates at the cumulative switching times; if the durations
    do not fill the horizon the final state is held until ``horizon``.
    Switching times at or beyond the horizon are inert.
    """
    if horizon <= 0:
        raise ValidationError(f"horizon must be positive, got {horizon}")
    taus = sched.switch_times()
    states = sched.states()
    bps = [0.0]
    vals = []
    switches = []
    for i in range(sched.n_durations):
        vals.append(states[i])
        is_last = i == sched.n_durations - 1
        # tau_S ends the schedule without flipping the state: not a switch
        if is_last or taus[i] >= horizon:
            bps.append(horizon)
            break
        bps.append(float(taus[i]))
        switches.append((float(taus[i]), i + 1, int(states[i])))
    if bps[-1] < horizon:
        bps[-1] = horizon
    return StepSignal(np.asarray(bps), np.asarray(vals, dtype=float), switches)


def extract_durations(signal: StepSignal) -> tuple[int, np.ndarray]:
    """Inverse of :func:`reconstruct_control` for signals spanning the horizon."""
    durations = np.diff(signal.breakpoints)
    return int(signal.values[0]), durations


def project_durations(s, t_green: float, t_red: float) -> np.ndarray:
    """Component-wise projection of a duration vector onto [t_green, t_red]."""
    if not t_green < t_red:
        raise ValidationError(f"need t_green < t_red, got ({t_green}, {t_red})")
    return np.clip(np.asarray(s, dtype=float), t_green, t_red)


def junction_signal_complement(signals, n_incoming: int):
    """Validate (and for 2-incoming junctions, complete) the signal set at a merge.

    At every time exactly one incoming edge may be green: the signal values
    must sum to ``n_incoming - 1``. Given a single signal at a two-incoming
    junction the second one is generated as its complement.
    """
    signals = list(signals)
    if not signals:
        raise ValidationError("no signals given")
    if len(signals) == 1 and n_incoming == 2:
        signals.append(signals[0].complement())
    if len(signals) != n_incoming:
        raise ValidationError(
            f"expected {n_incoming} signals (one per incoming edge), got {len(signals)}"
        )
    merged = np.unique(np.concatenate([s.breakpoints for s in signals]))
    for lo, hi in zip(merged[:-1], merged[1:]):
        mid = 0.5 * (lo + hi)
        total = sum(int(round(s(mid))) for s in signals)
        if total != n_incoming - 1:
            raise ValidationError(
                f"junction signals invalid on [{lo}, {hi}): "
                f"{total} red among {n_incoming} incoming edges, "
                f"expected exactly one green"
            )
    return signals


def switch_count_bounds(horizon: float, t_green: float, t_red: float):
    """Bounds on the number of switches of any feasible signal spanning [0, T]."""
    return horizon / t_red - 1.0, horizon / t_green + 1.0
