"""Classical elastic binary collisions.

The post-collision map is ``v' = v - n (n . (v - w))``, ``w' = w + n (n . (v - w))``.
The hemisphere S^2_+ is ``{n : n . (v - w) >= 0}``; the hard-sphere kernel is
masked to it.  All functions broadcast over leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_model import make_sphere_quadrature

UNIT_TOL = 1e-12


def _check_unit(n: np.ndarray) -> None:
    norm = np.linalg.norm(n, axis=-1)
    if np.any(np.abs(norm - 1.0) > UNIT_TOL):
        raise ValueError("collision parameter n must be a unit vector")


def post_collision(v, w, n):
    """Return ``(v_post, w_post)`` for pre-collision velocities and unit ``n``."""
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    _check_unit(n)
    t = np.sum(n * (v - w), axis=-1, keepdims=True)
    return v - t * n, w + t * n


@dataclass(frozen=True)
class ClassicalCollision:
    v: np.ndarray
    w: np.ndarray
    n: np.ndarray
    v_post: np.ndarray
    w_post: np.ndarray

    @classmethod
    def of(cls, v, w, n) -> ClassicalCollision:
        vp, wp = post_collision(v, w, n)
        return cls(np.asarray(v, float), np.asarray(w, float), np.asarray(n, float), vp, wp)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.v + self.w)

    @property
    def radius(self) -> float:
        return 0.5 * float(np.linalg.norm(self.v - self.w))


def hard_sphere_B(v, w, n):
    """``max(0, n . (v - w))``: the hard-sphere kernel on S^2_+."""
    n = np.asarray(n, dtype=np.float64)
    _check_unit(n)
    t = np.sum(n * (np.asarray(v, float) - np.asarray(w, float)), axis=-1)
    return np.maximum(t, 0.0)


def in_admissible_set(v, w, n, R: float):
    """Membership in the set where w, v', w' all lie in B_R and n is in S^2_+."""
    if R <= 0:
        raise ValueError("R must be positive")
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    vp, wp = post_collision(v, w, n)
    r2 = R * R
    sq = lambda x: np.sum(x * x, axis=-1)  # noqa: E731
    hemi = np.sum(n * (v - w), axis=-1) >= 0.0
    return (sq(w) <= r2) & (sq(vp) <= r2) & (sq(wp) <= r2) & hemi


def collision_sphere_points(v, w, m: int):
    """Post-collision pairs as n sweeps the order-``m`` sphere quadrature.

    Returns ``(normals, v_post, w_post)`` arrays of shape ``(m*m, 3)``.
    """
    sq = make_sphere_quadrature(m)
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    vp, wp = post_collision(v[None, :], w[None, :], sq.nodes)
    return sq.nodes.copy(), vp, wp
