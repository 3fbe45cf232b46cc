"""Plain Monte Carlo reference integrals for the gain term.

Nothing here imports the deterministic quadrature or the kinematics modules:
collision maps and kernels are written out again from their defining
formulas so that a shared mistake cannot validate itself.

Sampling uses Philox (a counter-based 64-bit generator).  A master seed is
split into one stream per batch with ``SeedSequence.spawn`` and batch sums
are reduced in batch order, so estimates are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

MIN_SAMPLES = 10_000
BATCH = 1 << 16

# same normalization as the deterministic path: weight k/4 over the full sphere
OMEGA_NORMALIZATION = 0.25


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    samples: int
    seed: int
    extra: dict = field(default_factory=dict, compare=False)

    def agrees(self, value: float, n_sigma: float = 3.0, other_error: float = 0.0) -> bool:
        return abs(self.mean - value) <= n_sigma * np.hypot(self.std_error, other_error)


def _streams(seed: int, n: int):
    return [np.random.Generator(np.random.Philox(s)) for s in np.random.SeedSequence(seed).spawn(n)]


def _uniform_ball(rng, n, radius):
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * (radius * rng.random(n) ** (1.0 / 3.0))[:, None]


def _uniform_sphere(rng, n):
    d = rng.standard_normal((n, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _estimate(sample_fn, samples: int, seed: int, extra=None) -> McEstimate:
    """Mean and standard error of ``sample_fn(rng, n)`` over ``samples`` draws."""
    if samples < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {samples}")
    nb = -(-samples // BATCH)
    s1 = s2 = 0.0
    for b, rng in enumerate(_streams(seed, nb)):
        n = min(BATCH, samples - b * BATCH)
        x = sample_fn(rng, n)
        s1 += float(np.sum(x))
        s2 += float(np.sum(x * x))
    mean = s1 / samples
    var = max(s2 / samples - mean * mean, 0.0) * samples / (samples - 1)
    return McEstimate(mean, float(np.sqrt(var / samples)), samples, seed, extra or {})


# ---------------------------------------------------------------------------
# kernels written out from their definitions


def _energy(x):
    return np.sqrt(1.0 + np.sum(x * x, axis=-1))


def _classical_integrand(v, w, n, f, b_override):
    u = v - w
    t = np.sum(n * u, axis=1)
    b = np.where(t >= 0.0, t, 0.0) if b_override is None else b_override(v, w, n)
    b = np.where(t >= 0.0, b, 0.0)
    vp = v - t[:, None] * n
    wp = w + t[:, None] * n
    return b * f(vp) * f(wp)


def _k_representation(p, q, om, f, sigma_fn, k_scale):
    """k(p,q,w) f(p') f(q') with p' = p + a w, q' = q - a w."""
    p0 = _energy(p)
    q0 = _energy(q)
    e = p0 + q0
    rel = q / q0[:, None] - p / p0[:, None]
    c = np.sum(om * rel, axis=1)
    tot = p + q
    wt = np.sum(om * tot, axis=1)
    den = e ** 2 - wt ** 2
    a = 2.0 * e * p0 * q0 * c / den
    pp = p + a[:, None] * om
    qq = q - a[:, None] * om
    s = e ** 2 - np.sum(tot * tot, axis=1)
    sigma = sigma_fn(p, q, pp, qq)
    k = 4.0 * s * sigma * e ** 2 * np.abs(c) / den ** 2
    k = np.where(c == 0.0, 0.0, k)
    return OMEGA_NORMALIZATION * k_scale * k * f(pp) * f(qq)


def _sigma_fn(kernel):
    name = type(kernel).__name__
    if name == "RelativisticConstantSigma":
        return _constant_sigma(float(kernel.sigma0))
    if name == "RelativisticMaxwellian":
        return lambda p, q, pp, qq: _maxwellian_sigma(kernel.theta, kernel.F, p, q, pp, qq)
    raise ValueError(f"kernel {kernel!r} is not relativistic")


def _constant_sigma(sigma0):
    return lambda p, q, pp, qq: np.full(len(p), sigma0)


def _maxwellian_sigma(theta, F, p, q, pp, qq):
    # scattering angle from the Minkowski cos(theta) formula, clamped
    d0 = _energy(p) - _energy(q)
    dp0 = _energy(pp) - _energy(qq)
    dd = p - q
    msq = d0 * d0 - np.sum(dd * dd, axis=1)
    cross = d0 * dp0 - np.sum(dd * (pp - qq), axis=1)
    safe = np.where(msq == 0.0, -1.0, msq)
    cos_t = np.clip(1.0 - 2.0 * cross / safe, -1.0, 1.0)
    g = 0.5 * np.sqrt(np.maximum(-msq, 0.0))
    g = np.where(g == 0.0, np.inf, g)
    return np.sqrt(1.0 + g * g) / g * np.interp(np.arccos(cos_t), theta, F)


def _is_classical(kernel) -> bool:
    return type(kernel).__name__ == "ClassicalHardSphere"


def mc_gain(
    f: Callable[[np.ndarray], np.ndarray],
    kernel,
    v,
    samples: int,
    seed: int,
    *,
    w_radius: float,
    w_domain: Callable[[np.ndarray], np.ndarray] | None = None,
    b_override: Callable | None = None,
    k_scale: float = 1.0,
) -> McEstimate:
    """Monte Carlo Q+(f, f)(v) with w uniform in a ball and n (or omega) uniform on S^2.

    ``w_domain`` optionally restricts the w-integral to a subset of that ball
    (an indicator of the points kept).  ``b_override`` replaces the classical
    kernel on the hemisphere; ``k_scale`` multiplies the relativistic kernel.
    """
    v = np.asarray(v, dtype=np.float64)
    volume = 4.0 / 3.0 * np.pi * w_radius ** 3
    measure = volume * 4.0 * np.pi
    classical = _is_classical(kernel) or b_override is not None
    sigma_fn = None if classical else _sigma_fn(kernel)

    def draw(rng, n):
        w = _uniform_ball(rng, n, w_radius)
        n_dir = _uniform_sphere(rng, n)
        vv = np.broadcast_to(v, w.shape)
        if classical:
            val = _classical_integrand(vv, w, n_dir, f, b_override)
        else:
            val = _k_representation(vv, w, n_dir, f, sigma_fn, k_scale)
        if w_domain is not None:
            val = val * w_domain(w)
        return measure * val

    return _estimate(draw, samples, seed)


def ball_probes(radius: float, count: int, seed: int) -> np.ndarray:
    """Low-discrepancy probe velocities in the closed ball of the given radius.

    Half of the probes are Sobol directions on the bounding sphere (where the
    gain of an indicator is smallest), the rest Sobol points filling the ball.
    """
    sob = qmc.Sobol(d=3, scramble=True, seed=seed)
    shell = count // 2
    pts = []
    if shell:
        u = sob.random(max(2, shell))[:shell]
        z = 2.0 * u[:, 0] - 1.0
        phi = 2.0 * np.pi * u[:, 1]
        r = np.sqrt(1.0 - z * z)
        pts.append(radius * np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1))
    inner = []
    while sum(len(x) for x in inner) < count - shell:
        c = (2.0 * sob.random(64) - 1.0) * radius
        inner.append(c[np.einsum("ij,ij->i", c, c) <= radius * radius])
    if count - shell:
        pts.append(np.concatenate(inner)[: count - shell])
    return np.concatenate(pts)


def mc_delta(
    R: float,
    lam: float,
    kernel,
    samples_per_v: int,
    v_probes: int,
    seed: int,
    *,
    f: Callable | None = None,
) -> McEstimate:
    """Minimum of the Monte Carlo gain of chi_{B_R} over probes in lam*B_R.

    The returned standard error is the largest among the probes; the
    minimizing probe is kept in ``extra['argmin']``.
    """
    if f is None:
        f = lambda x: (np.sum(x * x, axis=-1) <= R * R).astype(np.float64)  # noqa: E731
    probes = ball_probes(lam * R, v_probes, seed)
    children = np.random.SeedSequence(seed).generate_state(len(probes))
    ests = [mc_gain(f, kernel, v, samples_per_v, int(s), w_radius=R) for v, s in zip(probes, children)]
    means = np.array([e.mean for e in ests])
    i = int(np.argmin(means))
    return McEstimate(
        float(means[i]),
        max(e.std_error for e in ests),
        samples_per_v,
        seed,
        {"argmin": probes[i], "probe_means": means, "probes": probes},
    )


# ---------------------------------------------------------------------------
# the two relativistic representations


def _boost_to(beta, x4):
    """Lorentz transform of four-vectors into the frame moving with velocity ``beta``."""
    b2 = np.sum(beta * beta, axis=1)
    gam = 1.0 / np.sqrt(1.0 - b2)
    bx = np.sum(beta * x4[:, 1:], axis=1)
    t = gam * (x4[:, 0] - bx)
    coef = np.where(b2 > 0, (gam - 1.0) * bx / np.where(b2 > 0, b2, 1.0), 0.0) - gam * x4[:, 0]
    return np.concatenate([t[:, None], x4[:, 1:] + coef[:, None] * beta], axis=1)


def _cm_representation(p, q, Om, f, sigma0):
    """(1/p0) B f(p') f(q') / q0 with (p', q') scattered into CM direction Om."""
    p0 = _energy(p)
    q0 = _energy(q)
    P4 = np.concatenate([(p0 + q0)[:, None], p + q], axis=1)
    s = P4[:, 0] ** 2 - np.sum(P4[:, 1:] ** 2, axis=1)
    g = np.sqrt(np.maximum(s / 4.0 - 1.0, 0.0))
    beta = P4[:, 1:] / P4[:, :1]
    p_cm = np.concatenate([np.sqrt(1.0 + g * g)[:, None], g[:, None] * Om], axis=1)
    pp4 = _boost_to(-beta, p_cm)
    pp = pp4[:, 1:]
    qq = P4[:, 1:] - pp
    B = 0.5 * g * np.sqrt(s) * sigma0
    return B * f(pp) * f(qq) / (p0 * q0)


def mc_form_equivalence(
    p,
    test_f: Callable[[np.ndarray], np.ndarray],
    samples: int,
    seed: int,
    *,
    sigma0: float = 1.0,
    q_radius: float = 2.0,
    k_scale: float = 1.0,
):
    """Relativistic gain at ``p`` via the CM-angle form and via the k form.

    Both integrate q uniformly over the ball ``|q| <= q_radius`` with
    independent streams; returns ``(cm_form, k_form)`` estimates.
    """
    p = np.asarray(p, dtype=np.float64)
    measure = 4.0 / 3.0 * np.pi * q_radius ** 3 * 4.0 * np.pi
    seed_cm, seed_k = (int(s) for s in np.random.SeedSequence(seed).generate_state(2))

    def draw_cm(rng, n):
        q = _uniform_ball(rng, n, q_radius)
        Om = _uniform_sphere(rng, n)
        return measure * _cm_representation(np.broadcast_to(p, q.shape), q, Om, test_f, sigma0)

    sigma_fn = _constant_sigma(sigma0)

    def draw_k(rng, n):
        q = _uniform_ball(rng, n, q_radius)
        om = _uniform_sphere(rng, n)
        return measure * _k_representation(np.broadcast_to(p, q.shape), q, om, test_f, sigma_fn, k_scale)

    return _estimate(draw_cm, samples, seed_cm), _estimate(draw_k, samples, seed_k)
