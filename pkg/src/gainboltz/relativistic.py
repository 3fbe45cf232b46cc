"""Relativistic binary collisions of unit-mass particles (m = c = 1).

Four-vectors use the (+ - - -) signature.  The post-collision map is the
``p' = p + a w, q' = q - a w`` representation with the offset ``a(p, q, w)``.

Scattering-angle convention: the angle is evaluated from
``cos(theta) = 1 - 2 (p - q).(p' - q') / (p - q).(p - q)`` with Minkowski
products, then clamped to [-1, 1].  Under this formula the forward limit
``p' = p`` gives ``cos(theta) = -1`` (theta = pi) and the exchange
``p' = q`` gives the unclamped value 3.  For a genuine collision the raw
value equals ``1 - 2 cos(theta_cm)`` where theta_cm is the centre-of-mass
deflection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_model import (
    ClassicalHardSphere,
    ConfigurationError,
    FourMomentum,
    RelativisticConstantSigma,
    RelativisticMaxwellian,
    energy,
    make_sphere_quadrature,
)

CONSERVATION_TOL = 1e-8


class ConsistencyError(ArithmeticError):
    """A kinematic identity failed beyond round-off."""


class DegenerateCollisionError(ArithmeticError):
    """The collision is degenerate (p = q) for the requested quantity."""


def four(p) -> np.ndarray:
    """Stack energy and momentum into ``(..., 4)`` four-vectors."""
    p = np.asarray(p, dtype=np.float64)
    return np.concatenate([energy(p)[..., None], p], axis=-1)


def mdot(a, b):
    """Minkowski product with signature (+ - - -)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return a[..., 0] * b[..., 0] - np.sum(a[..., 1:] * b[..., 1:], axis=-1)


@dataclass(frozen=True)
class InvariantPair:
    s: float
    g: float


def invariants_sg(p, q) -> InvariantPair:
    """Total CM energy squared ``s`` and relative momentum ``g``."""
    P, Qv = four(p), four(q)
    s = float(mdot(P + Qv, P + Qv))
    diff = P - Qv
    rad = -float(mdot(diff, diff))
    if rad < -1e-12:
        raise ConsistencyError(f"negative relative-momentum radicand {rad!r}")
    g = 0.5 * np.sqrt(max(rad, 0.0))
    return InvariantPair(s, g)


def scattering_cos_raw(p, q, p_post, q_post) -> float:
    """Unclamped right-hand side of the cos(theta) formula in the module doc."""
    P, Qv, Pp, Qp = (four(_momentum(x)) for x in (p, q, p_post, q_post))
    den = mdot(P - Qv, P - Qv)
    if abs(den) < 1e-14:
        raise DegenerateCollisionError("scattering angle undefined for p = q")
    return float(1.0 - 2.0 * mdot(P - Qv, Pp - Qp) / den)


def scattering_angle(p, q, p_post, q_post) -> float:
    return float(np.arccos(np.clip(scattering_cos_raw(p, q, p_post, q_post), -1.0, 1.0)))


def _momentum(x) -> np.ndarray:
    return x.p if isinstance(x, FourMomentum) else np.asarray(x, dtype=np.float64)


def kernel_B(g: float, theta: float, spec) -> float:
    """B(g, theta) = g s^{1/2} sigma(g, theta) / 2 with s = 4 (1 + g^2)."""
    if g < 0 or not (0.0 <= theta <= np.pi):
        raise ValueError("need g >= 0 and theta in [0, pi]")
    s = 4.0 * (1.0 + g * g)
    if isinstance(spec, RelativisticConstantSigma):
        return 0.5 * g * np.sqrt(s) * spec.sigma0
    if isinstance(spec, RelativisticMaxwellian):
        # the 1/g of sigma cancels against the leading g
        return 0.5 * np.sqrt(s) * np.sqrt(1.0 + g * g) * float(spec.angular(theta))
    if isinstance(spec, ClassicalHardSphere):
        raise ConfigurationError("kernel_B needs a relativistic kernel, got the classical one")
    raise ConfigurationError(f"unknown kernel {spec!r}")


def offset_a(p, q, omega):
    """a = 2 e p0 q0 (w . (q^ - p^)) / (e^2 - (w . (p + q))^2); broadcasts."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    p0, q0 = energy(p), energy(q)
    e = p0 + q0
    c = np.sum(omega * (q / q0[..., None] - p / p0[..., None]), axis=-1)
    wP = np.sum(omega * (p + q), axis=-1)
    return 2.0 * e * p0 * q0 * c / (e * e - wP * wP)


def post_momenta(p, q, omega):
    """Vectorized ``(p + a omega, q - a omega)`` without the conservation check."""
    a = offset_a(p, q, omega)[..., None]
    omega = np.asarray(omega, dtype=np.float64)
    return np.asarray(p, float) + a * omega, np.asarray(q, float) - a * omega


@dataclass(frozen=True)
class RelativisticCollision:
    p: FourMomentum
    q: FourMomentum
    omega: np.ndarray
    a: float
    p_post: FourMomentum
    q_post: FourMomentum

    @property
    def theta(self) -> float:
        """Scattering angle; pi for the identity collision (see module doc)."""
        if np.array_equal(self.p.p, self.q.p):
            return np.pi
        return scattering_angle(self.p, self.q, self.p_post, self.q_post)

    @property
    def alpha(self) -> float:
        return (self.p.p0 * self.q.p0) / (self.p_post.p0 * self.q_post.p0)


def post_collision_rel(p, q, omega) -> RelativisticCollision:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    if abs(np.linalg.norm(omega) - 1.0) > 1e-12:
        raise ValueError("omega must be a unit vector")
    a = float(offset_a(p, q, omega))
    pp, qp = p + a * omega, q - a * omega
    before = energy(p) + energy(q)
    after = energy(pp) + energy(qp)
    if abs(after - before) > CONSERVATION_TOL * before:
        raise ConsistencyError(
            f"energy not conserved by the offset formula: {before!r} -> {after!r}"
        )
    return RelativisticCollision(
        FourMomentum(p), FourMomentum(q), omega, a, FourMomentum(pp), FourMomentum(qp)
    )


def kernel_k(p, q, omega, spec) -> float:
    """k = 4 s sigma e^2 |w.(q^ - p^)| / (e^2 - (w.(p+q))^2)^2.

    sigma is taken at the (g, theta) of the collision; p = q short-circuits to 0.
    """
    if isinstance(spec, ClassicalHardSphere):
        raise ConfigurationError("kernel_k needs a relativistic kernel")
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    p0, q0 = float(energy(p)), float(energy(q))
    c = float(omega @ (q / q0 - p / p0))
    if c == 0.0 or np.array_equal(p, q):
        return 0.0
    e = p0 + q0
    inv = invariants_sg(p, q)
    if isinstance(spec, RelativisticConstantSigma):
        sigma = spec.sigma0
    else:
        col = post_collision_rel(p, q, omega)
        sigma = float(spec.sigma(inv.g, col.theta))
    wP = float(omega @ (p + q))
    den = e * e - wP * wP
    return 4.0 * inv.s * sigma * e * e * abs(c) / (den * den)


def excentricity(p, q, omega) -> float:
    col = post_collision_rel(p, q, omega)
    return col.alpha


def ellipsoid_points(p, q, m: int):
    """``(omegas, p_post, q_post)`` as omega sweeps the order-``m`` quadrature."""
    sq = make_sphere_quadrature(m)
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    pp, qp = post_momenta(
        np.broadcast_to(p, sq.nodes.shape), np.broadcast_to(q, sq.nodes.shape), sq.nodes
    )
    return sq.nodes.copy(), pp, qp


@dataclass(frozen=True)
class QuadricFit:
    matrix: np.ndarray
    linear: np.ndarray
    eigenvalues: np.ndarray
    residual: float

    @property
    def is_ellipsoid(self) -> bool:
        return bool(np.all(self.eigenvalues > 0))


def fit_quadric(points: np.ndarray) -> QuadricFit:
    """Least-squares quadric ``x^T A x + b.x = 1`` through centred points.

    Points are centred and scaled to unit RMS radius before the fit; the
    reported eigenvalues are those of A in the scaled frame.
    """
    pts = np.asarray(points, dtype=np.float64)
    pts = np.unique(pts, axis=0)
    if len(pts) < 9:
        raise ValueError("need at least 9 distinct points for a quadric fit")
    c = pts.mean(axis=0)
    X = pts - c
    scale = np.sqrt(np.mean(np.sum(X * X, axis=1)))
    if scale == 0:
        raise ValueError("degenerate point cloud")
    X = X / scale
    x, y, z = X.T
    design = np.stack([x * x, y * y, z * z, 2 * x * y, 2 * x * z, 2 * y * z, x, y, z], axis=1)
    coef, *_ = np.linalg.lstsq(design, np.ones(len(X)), rcond=None)
    A = np.array(
        [
            [coef[0], coef[3], coef[4]],
            [coef[3], coef[1], coef[5]],
            [coef[4], coef[5], coef[2]],
        ]
    )
    resid = float(np.max(np.abs(design @ coef - 1.0)))
    return QuadricFit(A, coef[6:], np.linalg.eigvalsh(A), resid)


def boost(four_vectors, rapidity: float, axis: int = 0) -> np.ndarray:
    """Lorentz boost of ``(..., 4)`` four-vectors along a coordinate axis."""
    x = np.array(four_vectors, dtype=np.float64)
    ch, sh = np.cosh(rapidity), np.sinh(rapidity)
    t = x[..., 0].copy()
    xa = x[..., 1 + axis].copy()
    x[..., 0] = ch * t - sh * xa
    x[..., 1 + axis] = ch * xa - sh * t
    return x
