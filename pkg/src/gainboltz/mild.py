"""Picard iterates of the spatially inhomogeneous, velocity-truncated problem.

The iterates are

    f_0 = 0,
    f_{k+1}(t, x, v) = c0 chi1(x - t v) chi2(v)
        + chi2(v) int_0^t sum_w sum_n B(v - w, n)
              f_k(tau, x - (t - tau) v, v') f_k(tau, x - (t - tau) v, w') dtau

with closed balls chi1 = {|x| <= c1}, chi2 = {|v| <= c2} and the classical
hard-sphere kernel.  The w-sum runs over the nodes of a velocity grid on the
ball |w| <= c2, the n-sum over a sphere rule, and the tau-integral over a
composite Gauss-Legendre ladder that depends on t only.  Nothing in the
discretization depends on x, so translating x inside the shrinking ball
|x| <= c1 - t c2 reproduces every floating-point operation: the homogeneity
of the iterates holds bit for bit, not just to quadrature accuracy.

Evaluation is batched: all points of one level are expanded into the
(tau, w, n) sub-points of the level below in one array and reduced in a fixed
order.  Values are therefore deterministic and independent of batch size.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core_model import (
    ClassicalHardSphere,
    ConfigurationError,
    SphereQuadrature,
    VelocityGrid,
    make_sphere_quadrature,
    make_velocity_grid,
)
from .dynamics import BlowupReport, Controls, evolve_truncated
from .gain import delta_on_grid

log = logging.getLogger(__name__)

DETECTION_MARGIN = 0.10
# sub-point budget per expansion; bounds peak memory, does not affect values
_BLOCK = 1 << 21


class DepthError(ValueError):
    """Requested iterate beyond the evaluator's k_max."""


@dataclass(frozen=True)
class InhomogeneousConfig:
    c0: float
    c1: float
    c2: float
    T: float
    kernel: object = field(default_factory=ClassicalHardSphere)
    sphere_m: int = 4
    w_grid_n: int = 4
    n_t: int = 2

    def __post_init__(self):
        for name in ("c0", "c1", "c2", "T"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ConfigurationError(f"{name} must be positive, got {val!r}")
        if not self.c1 > self.T * self.c2:
            raise ConfigurationError(
                f"need c1 > T*c2 for a nonempty shrinking ball, got c1={self.c1}, T*c2={self.T * self.c2}"
            )
        if not isinstance(self.kernel, ClassicalHardSphere):
            raise ConfigurationError("the inhomogeneous problem is implemented for the classical kernel only")
        if int(self.n_t) != self.n_t or self.n_t < 1:
            raise ConfigurationError("n_t must be a positive integer")


def eval_phi(x, v, config: InhomogeneousConfig) -> float:
    """c0 chi1(x) chi2(v) with closed balls."""
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    inside = x @ x <= config.c1 ** 2 and v @ v <= config.c2 ** 2
    return float(config.c0) if inside else 0.0


def time_ladder(t: float, n_t: int):
    """Composite Gauss-Legendre nodes/weights on [0, t], n_t nodes per unit time panel."""
    if t <= 0:
        return np.zeros(0), np.zeros(0)
    panels = max(1, math.ceil(t))
    x, w = np.polynomial.legendre.leggauss(n_t)
    width = t / panels
    starts = width * np.arange(panels)
    nodes = (starts[:, None] + 0.5 * width * (x[None, :] + 1.0)).ravel()
    weights = np.tile(0.5 * width * w, panels)
    return nodes, weights


class PicardEvaluator:
    """Evaluates the iterates f_k at batches of (t, x, v).

    ``memo`` caches top-level values keyed by the exact floats of
    ``(k, t, x, v)``; the ladder depends on t alone, so equal keys always
    reproduce equal values.
    """

    def __init__(self, config: InhomogeneousConfig, k_max: int = 3):
        if int(k_max) != k_max or k_max < 1:
            raise ConfigurationError("k_max must be a positive integer")
        self.config = config
        self.k_max = int(k_max)
        self.grid: VelocityGrid = make_velocity_grid(config.c2, config.w_grid_n)
        self.sq: SphereQuadrature = make_sphere_quadrature(config.sphere_m)
        self.normals, hw = self.sq.hemisphere()
        # exactly one of n, -n has B > 0; the doubled hemisphere weight is halved
        self.pair_weights = (0.5 * self.grid.cell_volume) * hw
        self.memo: dict = {}
        self.evaluations = 0

    # -- public API -------------------------------------------------------

    def __call__(self, k: int, t, x, v) -> np.ndarray:
        return self.evaluate(k, t, x, v)

    def evaluate(self, k: int, t, x, v) -> np.ndarray:
        """f_k at arrays ``t (N,)``, ``x (N, 3)``, ``v (N, 3)``."""
        if int(k) != k or k < 0:
            raise DepthError(f"iterate index must be a nonnegative integer, got {k!r}")
        if k > self.k_max:
            raise DepthError(f"k={k} exceeds k_max={self.k_max}")
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        v = np.atleast_2d(np.asarray(v, dtype=np.float64))
        t, x, v = np.broadcast_arrays(t[:, None], x, v)
        t = np.ascontiguousarray(t[:, 0])
        x = np.ascontiguousarray(x)
        v = np.ascontiguousarray(v)
        if np.any(t < 0) or np.any(t > self.config.T):
            raise ConfigurationError(f"t must lie in [0, T={self.config.T}]")
        out = np.empty(len(t))
        todo = []
        keys = []
        for i in range(len(t)):
            key = (int(k), float(t[i]), *map(float, x[i]), *map(float, v[i]))
            hit = self.memo.get(key)
            if hit is None:
                todo.append(i)
                keys.append(key)
            else:
                out[i] = hit
        if todo:
            idx = np.array(todo)
            vals = self._level(int(k), t[idx], x[idx], v[idx])
            out[idx] = vals
            for key, val in zip(keys, vals):
                self.memo[key] = float(val)
        return out

    # -- recursion ----------------------------------------------------------

    def _level(self, k, t, x, v):
        cfg = self.config
        n = len(t)
        if k == 0 or n == 0:
            return np.zeros(n)
        self.evaluations += n
        v2 = np.einsum("ij,ij->i", v, v)
        inside_v = v2 <= cfg.c2 ** 2
        y = x - t[:, None] * v
        free = np.where(inside_v & (np.einsum("ij,ij->i", y, y) <= cfg.c1 ** 2), cfg.c0, 0.0)
        if k == 1:
            return free
        out = free.copy()
        active = np.flatnonzero(inside_v & (t > 0))
        # group by ladder length so each group is a rectangular expansion
        panels = np.maximum(1, np.ceil(t[active])).astype(np.int64)
        for p in np.unique(panels):
            sel = active[panels == p]
            per_point = int(p) * cfg.n_t * self.grid.size * len(self.normals)
            step = max(1, _BLOCK // per_point)
            for s in range(0, len(sel), step):
                part = sel[s:s + step]
                out[part] += self._collision_integral(k - 1, t[part], x[part], v[part])
        return out

    def _collision_integral(self, k, t, x, v):
        """int_0^t sum_w sum_n B f_k(tau, y, v') f_k(tau, y, w') dtau for each point."""
        cfg = self.config
        nt = cfg.n_t * max(1, math.ceil(float(t[0])))
        taus = np.empty((len(t), nt))
        tw = np.empty((len(t), nt))
        for i, ti in enumerate(t):
            taus[i], tw[i] = time_ladder(float(ti), cfg.n_t)
        W = self.grid.points
        N = self.normals
        nw, nn = len(W), len(N)
        # relative velocities and kernel, shape (P, nw, nn)
        u = v[:, None, :] - W[None, :, :]
        tn = np.einsum("pwc,nc->pwn", u, N)
        vp = v[:, None, None, :] - tn[..., None] * N[None, None, :, :]
        wp = W[None, :, None, :] + tn[..., None] * N[None, None, :, :]
        kern = np.abs(tn) * self.pair_weights[None, None, :]
        c2sq = cfg.c2 ** 2
        alive = (np.einsum("pwnc,pwnc->pwn", vp, vp) <= c2sq) & (np.einsum("pwnc,pwnc->pwn", wp, wp) <= c2sq)
        alive &= kern > 0
        P = len(t)
        # sub-points: (P, nt, nw, nn)
        y = x[:, None, :] - (t[:, None] - taus)[..., None] * v[:, None, :]  # (P, nt, 3)
        full = np.zeros((P, nt, nw, nn))
        pi, wi, ni = np.nonzero(alive)
        if len(pi):
            m = len(pi)
            sub_t = taus[pi].ravel()
            sub_y = y[pi].reshape(-1, 3)
            sub_vp = np.repeat(vp[pi, wi, ni], nt, axis=0)
            sub_wp = np.repeat(wp[pi, wi, ni], nt, axis=0)
            fv = self._level(k, sub_t, sub_y, sub_vp)
            nz = fv != 0.0
            fw = np.zeros_like(fv)
            if np.any(nz):
                fw[nz] = self._level(k, sub_t[nz], sub_y[nz], sub_wp[nz])
            prod = (fv * fw).reshape(m, nt)
            full[pi, :, wi, ni] = prod * kern[pi, wi, ni][:, None]
        # fixed reduction order: n, then w, then tau
        per_tau = full.sum(axis=3).sum(axis=2)
        return (per_tau * tw).sum(axis=1)


def eval_picard(k: int, t: float, x, v, ev: PicardEvaluator) -> float:
    """f_k(t, x, v) at a single point."""
    return float(ev.evaluate(k, [t], np.asarray(x, float)[None, :], np.asarray(v, float)[None, :])[0])


# ---------------------------------------------------------------------------
# shrinking-ball homogeneity


def _uniform_in_ball(rng, n, radius):
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * (radius * rng.random(n) ** (1.0 / 3.0))[:, None]


@dataclass(frozen=True)
class ShrinkingBallCheck:
    k: int
    t: float
    max_discrepancy: float
    max_scaled: float  # discrepancy / max(c0, |f_x|, |f_y|)
    rows: list  # (k, t, |x|, |y|, |v|, f_x, f_y, discrepancy)


def check_shrinking_ball(ev: PicardEvaluator, k: int, t: float, samples: int, seed: int) -> ShrinkingBallCheck:
    """Compare f_k(t, x, v) and f_k(t, y, v) for random x, y in |.| <= c1 - t c2, |v| <= c2."""
    cfg = ev.config
    if not (0 <= t < cfg.T):
        raise ConfigurationError(f"t must lie in [0, T={cfg.T})")
    if samples < 1:
        raise ConfigurationError("need at least one sample")
    radius = cfg.c1 - t * cfg.c2
    rng = np.random.Generator(np.random.Philox(seed))
    x = _uniform_in_ball(rng, samples, radius)
    y = _uniform_in_ball(rng, samples, radius)
    v = _uniform_in_ball(rng, samples, cfg.c2)
    tt = np.full(samples, float(t))
    fx = ev.evaluate(k, tt, x, v)
    fy = ev.evaluate(k, tt, y, v)
    disc = np.abs(fx - fy)
    scale = np.maximum(cfg.c0, np.maximum(np.abs(fx), np.abs(fy)))
    rows = [
        (k, float(t), float(np.linalg.norm(a)), float(np.linalg.norm(b)), float(np.linalg.norm(c)), float(p), float(q), float(d))
        for a, b, c, p, q, d in zip(x, y, v, fx, fy, disc)
    ]
    return ShrinkingBallCheck(k, float(t), float(disc.max()), float((disc / scale).max()), rows)


def negative_control(ev: PicardEvaluator, k: int, t: float, direction=(1.0, 0.0, 0.0)):
    """f_k at x with |x| = c1 - t c2 / 2 (outside the shrinking ball) and at y = 0, v = 0.

    Returns ``(f_x, f_y, |f_x - f_y|)``.  The first iterate agrees (free
    streaming at v = 0 keeps both inside the spatial ball); later iterates
    see characteristics from x leave it.
    """
    cfg = ev.config
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    x = (cfg.c1 - 0.5 * t * cfg.c2) * d
    pts = np.stack([x, np.zeros(3)])
    vals = ev.evaluate(k, np.full(2, float(t)), pts, np.zeros((2, 3)))
    return float(vals[0]), float(vals[1]), float(abs(vals[0] - vals[1]))


# ---------------------------------------------------------------------------
# independent single-point homogeneous iterates


def homogeneous_picard(k: int, t: float, v, config: InhomogeneousConfig) -> float:
    """k-th Picard iterate of g' = chi2 Q+(g, g), g(0) = c0 chi2, at one velocity.

    Plain scalar recursion over the full sphere with the kernel max(0, n.(v-w));
    it shares only the node sets with :class:`PicardEvaluator`.
    """
    grid = make_velocity_grid(config.c2, config.w_grid_n)
    sq = make_sphere_quadrature(config.sphere_m)
    wpts = [tuple(map(float, w)) for w in grid.points]
    nodes = [tuple(map(float, n)) for n in sq.nodes]
    nweights = [float(x) for x in sq.weights]
    vol = grid.cell_volume
    c2sq = config.c2 ** 2

    def g(level, tau, vel):
        vx, vy, vz = vel
        if level == 0 or vx * vx + vy * vy + vz * vz > c2sq:
            return 0.0
        value = float(config.c0)
        if level == 1 or tau <= 0:
            return value
        taus, tws = time_ladder(tau, config.n_t)
        integral = 0.0
        for s, sw in zip(taus, tws):
            inner = 0.0
            for wx, wy, wz in wpts:
                ux, uy, uz = vx - wx, vy - wy, vz - wz
                for (nx, ny, nz), nw in zip(nodes, nweights):
                    b = nx * ux + ny * uy + nz * uz
                    if b <= 0:
                        continue
                    a = g(level - 1, s, (vx - b * nx, vy - b * ny, vz - b * nz))
                    if a == 0.0:
                        continue
                    inner += nw * vol * b * a * g(level - 1, s, (wx + b * nx, wy + b * ny, wz + b * nz))
            integral += sw * inner
        return value + integral

    return g(int(k), float(t), tuple(map(float, v)))


# ---------------------------------------------------------------------------
# reduction to the homogeneous blowup


@dataclass(frozen=True)
class ReductionReport:
    """Outcome of the homogeneous run behind the shrinking ball.

    ``predicted`` is the bookkeeping condition c1 > c2 (1 + margin) / (delta c0):
    the ball |x| <= c1 - t c2 survives past the padded blowup time.
    ``within_horizon`` additionally asks for that time to be <= T.
    """

    blowup: BlowupReport
    delta: float
    predicted_time: float
    predicted: bool
    within_horizon: bool
    branch: str  # "c0_large", "c1_large" or "none"
    c0: float
    c1: float
    c2: float
    T: float

    @property
    def detected(self) -> bool:
        return self.blowup.detected

    @property
    def consistent(self) -> bool:
        """Detection happened exactly when the bookkeeping predicted it."""
        if self.blowup.detected:
            return self.predicted and self.blowup.t_detect <= (1 + DETECTION_MARGIN) * self.predicted_time
        return not (self.predicted and self.within_horizon)


def reduced_homogeneous_blowup(
    config: InhomogeneousConfig,
    grid: VelocityGrid | None = None,
    sq: SphereQuadrature | None = None,
    controls: Controls | None = None,
) -> ReductionReport:
    """Run the truncated homogeneous system with R = c2, rho0 = c0 up to T.

    Inside the shrinking ball the inhomogeneous iterates coincide with the
    homogeneous ones, so a blowup of this run before the ball closes is a
    blowup of the inhomogeneous truncated problem.  ``grid``/``sq`` default to
    a 16-cell grid on the c2-ball and an order-8 sphere rule.
    """
    grid = grid or make_velocity_grid(config.c2, 16)
    sq = sq or make_sphere_quadrature(8)
    if abs(grid.R - config.c2) > 1e-12 * config.c2:
        raise ConfigurationError("the reduction grid must cover exactly the c2-ball")
    delta = delta_on_grid(grid, config.c2, config.kernel, sq)
    t_star = 1.0 / (delta * config.c0)
    padded = (1.0 + DETECTION_MARGIN) * t_star
    predicted = config.c1 > config.c2 * padded
    within = padded <= config.T
    if predicted and delta * config.c0 >= 1.0 + DETECTION_MARGIN:
        branch = "c0_large"
    elif predicted:
        branch = "c1_large"
    else:
        branch = "none"
    _, report = evolve_truncated(config.c0, config.c2, config.kernel, grid, sq, config.T, controls)
    log.info("reduction: delta=%r t*=%r predicted=%s detected=%s", delta, t_star, predicted, report.detected)
    return ReductionReport(report, delta, t_star, predicted, within, branch, config.c0, config.c1, config.c2, config.T)
