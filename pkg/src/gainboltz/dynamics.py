"""Time integration of the spatially homogeneous gain-only equations.

Two systems live on a fixed velocity grid:

* the full equation ``df/dt = Q+(f, f)`` with post-collisional values that
  leave the grid dropped (zero extension), and
* the truncated equation ``df/dt = Q_R(f, f)``.

Dropping contributions only lowers the right-hand side, and Q+ is monotone,
so blowup of either discrete system still says something about the
untruncated one: it is a lower bound, never an upper bound.

Both use classical RK4 with step halving.  Every RK4 stage adds nonnegative
multiples of a monotone right-hand side, so the discrete scheme inherits the
comparison principle: ordered initial data stay ordered at every step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core_model import ConfigurationError, DistributionField, DomainError, SphereQuadrature, VelocityGrid
from .gain import delta_on_grid, gain_on_grid, q_r_apply

log = logging.getLogger(__name__)

FORM_TOL = 1e-12
DOMINATION_TOL = 1e-9


class InconclusiveRunError(RuntimeError):
    """The integrator stalled (step underflow or step budget) before any decision."""


# ---------------------------------------------------------------------------
# exact comparison solution


@dataclass(frozen=True)
class ComparisonState:
    rho0: float
    delta: float

    def __post_init__(self):
        if not (self.rho0 > 0 and self.delta > 0):
            raise ConfigurationError("comparison state needs rho0 > 0 and delta > 0")

    @property
    def blowup_time(self) -> float:
        return 1.0 / (self.delta * self.rho0)


def comparison_solution(cs: ComparisonState, t: float) -> float:
    """rho0 / (1 - delta rho0 t), the solution of rho' = delta rho^2."""
    if t < 0 or t >= cs.blowup_time:
        raise DomainError(f"t={t!r} outside [0, {cs.blowup_time!r})")
    return cs.rho0 / (1.0 - cs.delta * cs.rho0 * t)


# ---------------------------------------------------------------------------
# controls, trajectories, reports


@dataclass(frozen=True)
class Controls:
    """Step control.

    ``dt0_factor`` sets the first step to that fraction of the initial growth
    time ``sup f0 / sup F(f0)`` (which is ``1/(delta rho0)`` for the truncated
    system).  A step is halved and retried while its relative sup-norm
    increment exceeds ``max_rel_increment``.  ``record_every`` controls how
    often full fields are kept; summaries are kept at every step.
    """

    dt0_factor: float = 0.01
    max_rel_increment: float = 1e-3
    dt_min: float = 1e-12
    threshold_factor: float = 1e6
    max_steps: int = 200_000
    record_every: int = 100

    def __post_init__(self):
        if not (self.dt0_factor > 0 and self.max_rel_increment > 0 and self.dt_min > 0):
            raise ConfigurationError("step controls must be positive")
        if self.threshold_factor <= 1:
            raise ConfigurationError("threshold factor must exceed 1")
        if self.max_steps < 1 or self.record_every < 1:
            raise ConfigurationError("max_steps and record_every must be >= 1")


@dataclass
class Trajectory:
    """Per-step summaries plus field snapshots every ``record_every`` steps.

    Step 0 and the final step are always snapshotted.
    """

    grid: VelocityGrid
    times: list = field(default_factory=list)
    sup_norm: list = field(default_factory=list)
    min_on_ball: list = field(default_factory=list)
    spread: list = field(default_factory=list)
    comparison: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)  # step index -> DistributionField

    def append(self, t, f: DistributionField, ball_mask, comparison=np.nan):
        vals = f.values[ball_mask] if np.any(ball_mask) else np.zeros(1)
        self.times.append(float(t))
        self.sup_norm.append(f.sup_norm)
        self.min_on_ball.append(float(vals.min()))
        self.spread.append(float(vals.max() - vals.min()))
        self.comparison.append(float(comparison))

    def snapshot(self, step: int, f: DistributionField):
        self.snapshots[step] = f

    def __len__(self):
        return len(self.times)

    @property
    def snapshot_times(self) -> np.ndarray:
        return np.array([self.times[i] for i in sorted(self.snapshots)])

    def fields(self):
        """``(t, field)`` pairs in time order."""
        return [(self.times[i], self.snapshots[i]) for i in sorted(self.snapshots)]

    def rows(self):
        """``(t, sup_norm, min_on_ball, comparison)`` per step."""
        return list(zip(self.times, self.sup_norm, self.min_on_ball, self.comparison))


@dataclass(frozen=True)
class BlowupReport:
    detected: bool
    t_detect: float
    threshold: float
    final_sup_norm: float
    steps: int
    dt_final: float
    final_time: float = 0.0
    rejected: int = 0
    delta: float = float("nan")
    predicted_time: float = float("inf")
    comparison_margin: float = float("nan")
    max_form_spread: float = 0.0
    domination_margin: float = float("nan")

    def __post_init__(self):
        if self.detected and not self.final_sup_norm >= self.threshold:
            raise ValueError("detected report below its threshold")


# ---------------------------------------------------------------------------
# RK4 with step halving on a tuple of fields


def _rk4(rhs, state, dt):
    k1 = rhs(state)
    s2 = tuple(x + 0.5 * dt * k for x, k in zip(state, k1))
    k2 = rhs(s2)
    s3 = tuple(x + 0.5 * dt * k for x, k in zip(state, k2))
    k3 = rhs(s3)
    s4 = tuple(x + dt * k for x, k in zip(state, k3))
    k4 = rhs(s4)
    return tuple(
        x + (dt / 6.0) * (a + 2.0 * b + 2.0 * c + d) for x, a, b, c, d in zip(state, k1, k2, k3, k4)
    )


def _rel_increment(old, new) -> float:
    worst = 0.0
    for a, b in zip(old, new):
        top = float(np.max(np.abs(a))) if a.size else 0.0
        if top > 0:
            worst = max(worst, float(np.max(np.abs(b - a))) / top)
    return worst


@dataclass
class _RunResult:
    times: list
    states: list  # only recorded states: list of (step, tuple)
    detected: bool
    t_detect: float
    steps: int
    rejected: int
    dt_final: float
    final: tuple
    final_time: float


def _integrate(
    rhs: Callable,
    state0: tuple,
    t_end: float,
    dt0: float,
    threshold: float,
    controls: Controls,
    on_step: Callable,
    predicted: float = np.inf,
):
    """Drive RK4 until threshold, ``t_end`` or a stall; ``on_step(step, t, state)``."""
    t = 0.0
    state = state0
    dt = dt0
    steps = rejected = 0
    on_step(0, t, state)
    while t < t_end:
        if steps >= controls.max_steps:
            raise InconclusiveRunError(f"step budget {controls.max_steps} exhausted at t={t!r}")
        h = min(dt, t_end - t)
        while True:
            new = _rk4(rhs, state, h)
            finite = all(np.all(np.isfinite(x)) for x in new)
            if finite and _rel_increment(state, new) <= controls.max_rel_increment:
                break
            h *= 0.5
            rejected += 1
            if h < controls.dt_min:
                raise InconclusiveRunError(
                    f"step size underflow at t={t!r} (sup={max(float(np.max(x)) for x in state)!r}) "
                    f"without reaching the threshold {threshold!r}; predicted blowup at {predicted!r}"
                )
        t = t + h if h < t_end - t else t_end
        state = new
        dt = h
        steps += 1
        on_step(steps, t, state)
        top = max(float(np.max(x)) for x in state)
        if top >= threshold:
            return True, t, steps, rejected, dt, state, t
    return False, float("nan"), steps, rejected, dt, state, t


def _initial_dt(rhs, state, controls: Controls, t_end: float) -> float:
    k = rhs(state)
    top = max(float(np.max(x)) for x in state)
    rate = max(float(np.max(x)) for x in k)
    if top <= 0 or rate <= 0:
        return t_end
    return controls.dt0_factor * top / rate


# ---------------------------------------------------------------------------
# truncated equation


def evolve_truncated(
    rho0: float,
    R: float,
    kernel,
    grid: VelocityGrid,
    sq: SphereQuadrature,
    t_end: float,
    controls: Controls | None = None,
):
    """Integrate df/dt = Q_R(f, f) from f(0) = rho0 chi_{B_R} on ``grid``.

    Returns ``(trajectory, report)``.  Every accepted step is checked to be of
    the form c chi_{B_R} (max - min over B_R nodes <= 1e-12 c) and compared
    against the exact comparison solution with the grid's delta.
    """
    controls = controls or Controls()
    if rho0 < 0 or not np.isfinite(rho0):
        raise ConfigurationError(f"rho0 must be >= 0, got {rho0!r}")
    if not t_end > 0:
        raise ConfigurationError(f"t_end must be positive, got {t_end!r}")
    mask = grid.ball_mask(R)
    traj = Trajectory(grid)
    threshold = controls.threshold_factor * rho0
    if rho0 == 0:
        zero = DistributionField(grid, np.zeros(grid.size))
        traj.append(0.0, zero, mask)
        traj.append(t_end, zero, mask)
        traj.snapshot(0, zero)
        traj.snapshot(1, zero)
        return traj, BlowupReport(False, float("nan"), 0.0, 0.0, 1, t_end, t_end)

    delta = delta_on_grid(grid, R, kernel, sq)
    if not delta > 0:
        raise ConfigurationError(f"truncated operator vanishes on this grid (delta={delta!r})")
    cs = ComparisonState(rho0, delta)

    def rhs(state):
        (v,) = state
        return (q_r_apply(DistributionField(grid, v), R, kernel, sq).values,)

    margin = [np.inf]
    worst_spread = [0.0]

    def on_step(step, t, state):
        f = DistributionField(grid, state[0])
        comp = comparison_solution(cs, t) if t < cs.blowup_time else np.nan
        traj.append(t, f, mask, comp)
        height = traj.sup_norm[-1]
        rel_spread = traj.spread[-1] / height if height > 0 else 0.0
        worst_spread[0] = max(worst_spread[0], rel_spread)
        if rel_spread > FORM_TOL:
            raise ArithmeticError(f"field lost the form c*chi_B_R at t={t!r}: spread {rel_spread!r}")
        if not np.all(state[0][~mask] == 0.0):
            raise ArithmeticError(f"field leaked outside B_R at t={t!r}")
        if np.isfinite(comp):
            margin[0] = min(margin[0], (traj.min_on_ball[-1] - comp) / comp)
        if step % controls.record_every == 0:
            traj.snapshot(step, f)

    state0 = (np.where(mask, float(rho0), 0.0),)
    dt0 = controls.dt0_factor / (delta * rho0)
    detected, t_det, steps, rejected, dt, final, t_fin = _integrate(
        rhs, state0, t_end, dt0, threshold, controls, on_step, cs.blowup_time
    )
    traj.snapshot(len(traj) - 1, DistributionField(grid, final[0]))
    report = BlowupReport(
        detected,
        t_det,
        threshold,
        float(np.max(final[0])),
        steps,
        dt,
        t_fin,
        rejected,
        delta,
        cs.blowup_time,
        float(margin[0]),
        worst_spread[0],
    )
    log.info("truncated run: %s", report)
    return traj, report


# ---------------------------------------------------------------------------
# full homogeneous equation and the co-integrated pair


def evolve_full_homogeneous(
    f0: DistributionField,
    kernel,
    sq: SphereQuadrature,
    t_end: float,
    controls: Controls | None = None,
    *,
    rho0: float | None = None,
    R: float | None = None,
):
    """Integrate df/dt = Q+(f, f) on the grid of ``f0``.

    ``rho0`` (default: sup f0) sets the threshold ``threshold_factor * rho0``;
    ``R`` (default: the grid radius) only selects the ball used for the
    per-step min/spread summaries.
    """
    controls = controls or Controls()
    if not t_end > 0:
        raise ConfigurationError(f"t_end must be positive, got {t_end!r}")
    grid = f0.grid
    rho0 = f0.sup_norm if rho0 is None else float(rho0)
    mask = grid.ball_mask(grid.R if R is None else R)
    traj = Trajectory(grid)
    threshold = controls.threshold_factor * rho0

    def rhs(state):
        (v,) = state
        return (gain_on_grid(DistributionField(grid, v), kernel, sq),)

    def on_step(step, t, state):
        f = DistributionField(grid, state[0])
        traj.append(t, f, mask)
        if step % controls.record_every == 0:
            traj.snapshot(step, f)

    state0 = (np.array(f0.values, dtype=np.float64),)
    if rho0 <= 0 or f0.sup_norm == 0:
        on_step(0, 0.0, state0)
        return traj, BlowupReport(False, float("nan"), threshold, f0.sup_norm, 0, t_end, 0.0)
    dt0 = _initial_dt(rhs, state0, controls, t_end)
    detected, t_det, steps, rejected, dt, final, t_fin = _integrate(
        rhs, state0, t_end, dt0, threshold, controls, on_step
    )
    traj.snapshot(len(traj) - 1, DistributionField(grid, final[0]))
    return traj, BlowupReport(
        detected, t_det, threshold, float(np.max(final[0])), steps, dt, t_fin, rejected
    )


def co_evolve(
    f0: DistributionField,
    rho0: float,
    R: float,
    kernel,
    sq: SphereQuadrature,
    t_end: float,
    controls: Controls | None = None,
):
    """Integrate the full and truncated systems with shared time steps.

    The truncated system starts from ``rho0 chi_{B_R}`` on the grid of ``f0``.
    Domination ``f >= f~ - 1e-9 (1 + |f~|_inf)`` is checked at every accepted
    step; the smallest slack is reported as ``domination_margin``.  The run
    stops when either system crosses ``threshold_factor * rho0``.

    Returns ``(full_trajectory, truncated_trajectory, report)``.
    """
    controls = controls or Controls()
    grid = f0.grid
    mask = grid.ball_mask(R)
    if not np.all(f0.values >= np.where(mask, rho0, 0.0)):
        raise ConfigurationError("co_evolve needs f0 >= rho0 chi_{B_R} nodewise")
    delta = delta_on_grid(grid, R, kernel, sq)
    cs = ComparisonState(rho0, delta)
    full, trunc = Trajectory(grid), Trajectory(grid)
    threshold = controls.threshold_factor * rho0

    def rhs(state):
        a, b = state
        return (
            gain_on_grid(DistributionField(grid, a), kernel, sq),
            q_r_apply(DistributionField(grid, b), R, kernel, sq).values,
        )

    margin = [np.inf]

    def on_step(step, t, state):
        a, b = (DistributionField(grid, x) for x in state)
        full.append(t, a, mask)
        comp = comparison_solution(cs, t) if t < cs.blowup_time else np.nan
        trunc.append(t, b, mask, comp)
        tol = DOMINATION_TOL * (1.0 + b.sup_norm)
        slack = float(np.min(a.values - b.values)) + tol
        margin[0] = min(margin[0], slack)
        if step % controls.record_every == 0:
            full.snapshot(step, a)
            trunc.snapshot(step, b)

    state0 = (np.array(f0.values, dtype=np.float64), np.where(mask, float(rho0), 0.0))
    dt0 = _initial_dt(rhs, state0, controls, t_end)
    detected, t_det, steps, rejected, dt, final, t_fin = _integrate(
        rhs, state0, t_end, dt0, threshold, controls, on_step, cs.blowup_time
    )
    last = len(full) - 1
    full.snapshot(last, DistributionField(grid, final[0]))
    trunc.snapshot(last, DistributionField(grid, final[1]))
    report = BlowupReport(
        detected,
        t_det,
        threshold,
        float(max(np.max(final[0]), np.max(final[1]))),
        steps,
        dt,
        t_fin,
        rejected,
        delta,
        cs.blowup_time,
        domination_margin=float(margin[0]),
    )
    return full, trunc, report


def check_domination(traj_full: Trajectory, traj_truncated: Trajectory, tol: float = DOMINATION_TOL) -> bool:
    """Nodewise f >= f~ - tol (1 + |f~|_inf) at every shared snapshot."""
    if traj_full.grid != traj_truncated.grid:
        raise ValueError("trajectories live on different grids")
    if not np.array_equal(traj_full.snapshot_times, traj_truncated.snapshot_times):
        raise ValueError("trajectories do not share snapshot times")
    for (_, a), (_, b) in zip(traj_full.fields(), traj_truncated.fields()):
        if np.any(a.values < b.values - tol * (1.0 + b.sup_norm)):
            return False
    return True
