"""Deterministic quadrature of the gain term Q+(f, f) and derived quantities.

The w- (or q-) integral runs over the nodes of the field's own velocity grid
(midpoint rule on its cells), the angular integral over a product sphere
rule.  Off-node values of ``f`` come from trilinear interpolation with zero
extension, so every quantity here is a lower bound for the untruncated
integral: restricting w to the grid ball only drops nonnegative terms.
"""

from __future__ import annotations

import hashlib
import logging
import os
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _quadrature as _q
from .core_model import (
    ClassicalHardSphere,
    ConfigurationError,
    DistributionField,
    RelativisticConstantSigma,
    RelativisticMaxwellian,
    SphereQuadrature,
    lattice_points,
    make_sphere_quadrature,
    make_velocity_grid,
    regime_of,
)

log = logging.getLogger(__name__)

CHUNK = 8  # targets per work item; fixed so results never depend on thread count
_threads = 1


def set_threads(n: int) -> None:
    """Worker threads for gain evaluation (0 means one per CPU)."""
    global _threads
    if n < 0:
        raise ConfigurationError("thread count must be >= 0")
    if n == 0:
        n = os.cpu_count() or 1
    _threads = int(n)


def get_threads() -> int:
    return _threads


class EstimationError(RuntimeError):
    """The gain lower-bound constant came out nonpositive at the requested resolution."""


def _kernel_args(kernel):
    if isinstance(kernel, ClassicalHardSphere):
        return _q.KIND_CLASSICAL, 0.0, np.zeros(2), np.zeros(2)
    if isinstance(kernel, RelativisticConstantSigma):
        return _q.KIND_REL_CONSTANT, float(kernel.sigma0), np.zeros(2), np.zeros(2)
    if isinstance(kernel, RelativisticMaxwellian):
        return _q.KIND_REL_MAXWELL, 0.0, kernel.theta, kernel.F
    raise ConfigurationError(f"unsupported kernel {kernel!r}")


def is_dihedral_symmetric(f: DistributionField) -> bool:
    """Exact invariance of the node values under axis flips and the x<->y swap."""
    d = f.dense()
    return bool(
        np.array_equal(d, d[::-1, :, :])
        and np.array_equal(d, d[:, ::-1, :])
        and np.array_equal(d, d[:, :, ::-1])
        and np.array_equal(d, d.transpose(1, 0, 2))
    )


def _orbit_representatives(targets: np.ndarray):
    a = np.abs(targets)
    reps = np.stack([np.maximum(a[:, 0], a[:, 1]), np.minimum(a[:, 0], a[:, 1]), a[:, 2]], axis=1)
    uniq, inverse = np.unique(reps, axis=0, return_inverse=True)
    return uniq, inverse.reshape(-1)


def _raw_gain(f: DistributionField, kernel, sq: SphereQuadrature, targets, threads, fault_scale):
    grid = f.grid
    dense = f.dense()
    lo = grid.lower_center
    inv_h = 1.0 / grid.h
    limit = float(grid.n + 1)
    supp2 = grid.support_radius ** 2
    scale = grid.cell_volume * fault_scale
    kind, sigma0, tth, tF = _kernel_args(kernel)
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    out = np.zeros(len(targets))
    wpts = np.ascontiguousarray(grid.points)
    nodes, nweights = sq.hemisphere()

    def work(start):
        stop = min(start + CHUNK, len(targets))
        seg = np.empty(stop - start)
        if kind == _q.KIND_CLASSICAL:
            _q.classical_gain(
                targets[start:stop], wpts, nodes, nweights, dense, lo, inv_h, limit, supp2, 0.5 * scale, seg
            )
        else:
            _q.relativistic_gain(
                targets[start:stop], wpts, nodes, nweights, dense, lo, inv_h, limit, supp2, scale,
                kind, sigma0, tth, tF, seg,
            )
        out[start:stop] = seg

    starts = range(0, len(targets), CHUNK)
    threads = _threads if threads is None else threads
    if threads <= 1 or len(targets) <= CHUNK:
        for s in starts:
            work(s)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, starts))
    return out


def gain_at(
    f: DistributionField,
    kernel,
    sq: SphereQuadrature,
    targets,
    *,
    threads: int | None = None,
    symmetric: bool | None = None,
    fault_scale: float = 1.0,
) -> np.ndarray:
    """Q+(f, f) at an ``(M, 3)`` array of target velocities.

    ``symmetric=None`` detects exact dihedral symmetry of ``f`` and, when the
    sphere rule shares it, evaluates only one target per symmetry orbit.
    ``fault_scale`` multiplies the kernel and exists for fault-injection tests.
    """
    regime_of(kernel)
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if not np.any(f.values):
        return np.zeros(len(targets))
    if symmetric is None:
        symmetric = sq.dihedral_symmetric and is_dihedral_symmetric(f)
    elif symmetric and not sq.dihedral_symmetric:
        raise ConfigurationError("symmetry reduction needs a sphere order divisible by 4")
    if symmetric:
        reps, inverse = _orbit_representatives(targets)
        return _raw_gain(f, kernel, sq, reps, threads, fault_scale)[inverse]
    return _raw_gain(f, kernel, sq, targets, threads, fault_scale)


def gain_apply(f: DistributionField, kernel, sq: SphereQuadrature, v, **kw) -> float:
    """Q+(f, f)(v) at a single velocity."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise ValueError("v must be a finite 3-vector")
    return float(gain_at(f, kernel, sq, v[None, :], **kw)[0])


def gain_on_grid(f: DistributionField, kernel, sq: SphereQuadrature, **kw) -> np.ndarray:
    return gain_at(f, kernel, sq, f.grid.points, **kw)


# ---------------------------------------------------------------------------
# cached minimum of the gain of a normalized pattern

_min_cache: OrderedDict = OrderedDict()
_MIN_CACHE_SIZE = 64


def _digest(arr: np.ndarray) -> str:
    return hashlib.blake2b(np.ascontiguousarray(arr).tobytes(), digest_size=16).hexdigest()


def _min_gain(f: DistributionField, kernel, sq, targets: np.ndarray, fault_scale=1.0, threads=None):
    """Minimum of Q+(f, f) over ``targets`` with its first minimizing target.

    Targets are visited in order of decreasing |v| in fixed-size chunks; since
    the integrand is nonnegative the scan stops at the first exact zero.
    """
    key = (f.grid, sq, kernel, _digest(f.values), _digest(targets), fault_scale)
    hit = _min_cache.get(key)
    if hit is not None:
        _min_cache.move_to_end(key)
        return hit
    symmetric = sq.dihedral_symmetric and is_dihedral_symmetric(f)
    if symmetric:
        candidates, inverse = _orbit_representatives(targets)
    else:
        candidates = targets
    order = np.lexsort(
        (candidates[:, 2], candidates[:, 1], candidates[:, 0], -np.einsum("ij,ij->i", candidates, candidates))
    )
    ordered = candidates[order]
    threads = _threads if threads is None else threads
    wave = CHUNK * max(1, threads) * 4
    best, arg = np.inf, None
    for start in range(0, len(ordered), wave):
        seg = ordered[start:start + wave]
        vals = _raw_gain(f, kernel, sq, seg, threads, fault_scale)
        i = int(np.argmin(vals))
        if vals[i] < best:
            best, arg = float(vals[i]), seg[i].copy()
        if best == 0.0:
            break
    if symmetric and arg is not None:
        # report a member of the original target set
        rep_index = int(np.flatnonzero(np.all(candidates == arg, axis=1))[0])
        arg = targets[int(np.flatnonzero(inverse == rep_index)[0])].copy()
    result = (best, arg)
    _min_cache[key] = result
    if len(_min_cache) > _MIN_CACHE_SIZE:
        _min_cache.popitem(last=False)
    return result


def clear_cache() -> None:
    _min_cache.clear()


# ---------------------------------------------------------------------------
# gain lower-bound constant


@dataclass(frozen=True)
class DeltaEstimate:
    delta: float
    lam: float
    R: float
    grid_n: int
    sphere_m: int
    kernel: object
    argmin: np.ndarray | None = None

    def __post_init__(self):
        if not self.delta > 0:
            raise EstimationError(f"nonpositive delta {self.delta!r}")
        if self.lam < 1:
            raise ConfigurationError(f"lambda must be >= 1, got {self.lam!r}")


def delta_min(R: float, lam: float, kernel, grid_n: int, sphere_m: int, *, fault_scale=1.0, threads=None):
    """Raw minimum of Q+(chi_{B_R}, chi_{B_R}) over lattice nodes in lam*B_R.

    Returns ``(value, argmin)``; unlike :func:`estimate_delta` it does not
    reject zero, which makes it usable for lambda sweeps.
    """
    if lam < 1:
        raise ConfigurationError(f"lambda must be >= 1, got {lam!r}")
    grid = make_velocity_grid(R, grid_n)
    sq = make_sphere_quadrature(sphere_m)
    chi = DistributionField.indicator(grid, R)
    targets = lattice_points(grid.h, grid.n, lam * R)
    return _min_gain(chi, kernel, sq, targets, fault_scale=fault_scale, threads=threads)


def estimate_delta(R: float, lam: float, kernel, grid_n: int = 32, sphere_m: int = 16, **kw) -> DeltaEstimate:
    value, arg = delta_min(R, lam, kernel, grid_n, sphere_m, **kw)
    if not value > 0:
        raise EstimationError(
            f"delta estimate {value!r} <= 0 for R={R}, lambda={lam}: "
            "lambda too large or resolution too coarse"
        )
    return DeltaEstimate(value, lam, R, grid_n, sphere_m, kernel, arg)


# ---------------------------------------------------------------------------
# truncated operator and monotonicity


def q_r_apply(f: DistributionField, R: float, kernel, sq: SphereQuadrature, **kw) -> DistributionField:
    """Q_R(f, f): the minimum of Q+(f, f) over nodes in B_R, spread on B_R.

    The gain of ``f`` is obtained from the cached gain of ``f / sup f`` times
    ``(sup f)^2``; Q+ is bilinear so this only changes round-off.
    """
    mask = f.grid.ball_mask(R)
    height = f.sup_norm
    if height == 0.0 or not np.any(mask):
        return DistributionField(f.grid, np.zeros(f.grid.size))
    pattern = DistributionField(f.grid, f.values / height)
    c_min, _ = _min_gain(pattern, kernel, sq, f.grid.points[mask], **kw)
    return DistributionField(f.grid, np.where(mask, c_min * height * height, 0.0))


def check_monotone(f: DistributionField, g: DistributionField, kernel, sq: SphereQuadrature, **kw) -> bool:
    """Nodewise Q+(f, f) >= Q+(g, g) - 1e-14 for fields with f >= g >= 0."""
    if f.grid != g.grid:
        raise ValueError("fields live on different grids")
    if np.any(f.values < g.values):
        raise ValueError("check_monotone needs f >= g nodewise")
    qf = gain_on_grid(f, kernel, sq, **kw)
    qg = gain_on_grid(g, kernel, sq, **kw)
    return bool(np.all(qf >= qg - 1e-14))


def delta_on_grid(grid, R: float, kernel, sq: SphereQuadrature, **kw) -> float:
    """min over nodes of ``grid`` in B_R of Q+(chi_{B_R}, chi_{B_R}).

    This is the constant with Q_R(c chi_{B_R}) = c^2 delta chi_{B_R}; for the
    grid ``make_velocity_grid(R, n)`` it equals ``estimate_delta(R, 1, ..., n)``.
    """
    mask = grid.ball_mask(R)
    if not np.any(mask):
        raise ConfigurationError(f"no grid nodes inside radius {R!r}")
    chi = DistributionField(grid, mask.astype(np.float64))
    return _min_gain(chi, kernel, sq, grid.points[mask], **kw)[0]
