import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gainboltz.classical import post_collision
from gainboltz.core_model import (
    ClassicalHardSphere,
    ConfigurationError,
    RelativisticConstantSigma,
    RelativisticMaxwellian,
    energy,
)
from gainboltz.relativistic import (
    DegenerateCollisionError,
    post_momenta,
    boost,
    ellipsoid_points,
    excentricity,
    fit_quadric,
    four,
    invariants_sg,
    kernel_B,
    kernel_k,
    mdot,
    offset_a,
    post_collision_rel,
    scattering_angle,
    scattering_cos_raw,
)

coord = st.floats(-5, 5, allow_nan=False)
vec = st.tuples(coord, coord, coord).map(np.array)
unit = (
    st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
    .map(np.array)
    .filter(lambda x: np.linalg.norm(x) > 1e-3)
    .map(lambda x: x / np.linalg.norm(x))
)


def _random_triples(n, radius, seed):
    rng = np.random.Generator(np.random.Philox(seed))
    p = rng.uniform(-radius, radius, (n, 3))
    q = rng.uniform(-radius, radius, (n, 3))
    om = rng.normal(size=(n, 3))
    om /= np.linalg.norm(om, axis=1)[:, None]
    return p, q, om


def test_invariants_examples():
    inv = invariants_sg([0, 0, 0], [0, 0, 0])
    assert inv.s == 4.0 and inv.g == 0.0
    p = np.array([0.7, -1.2, 3.0])
    inv = invariants_sg(p, p)
    assert inv.g == 0.0
    assert inv.s == pytest.approx(4.0, abs=1e-12)
    inv = invariants_sg([1, 0, 0], [-1, 0, 0])
    assert inv.s == pytest.approx(8.0, abs=1e-12)
    assert inv.g == pytest.approx(1.0, abs=1e-12)
    assert inv.s == pytest.approx(4 * (1 + inv.g ** 2), abs=1e-10)


@given(vec, vec)
def test_s_g_identity(p, q):
    inv = invariants_sg(p, q)
    assert inv.s >= 4.0 - 1e-9
    assert abs(inv.s - 4 * (1 + inv.g ** 2)) <= 1e-10 * inv.s


def test_offset_examples():
    p = np.array([0.3, 0.4, -0.2])
    assert offset_a(p, p, [0, 0, 1]) == 0.0
    assert offset_a([1, 0, 0], [0, 0, 0], [0, 1, 0]) == 0.0
    e = 1.0 + np.sqrt(2.0)
    a = offset_a([1, 0, 0], [0, 0, 0], [1, 0, 0])
    assert a == pytest.approx(-2 * e / (e * e - 1), rel=1e-14)
    col = post_collision_rel([1, 0, 0], [0, 0, 0], [1, 0, 0])
    np.testing.assert_allclose(col.p_post.p + col.q_post.p, [1, 0, 0], atol=1e-12)
    assert col.p_post.p0 + col.q_post.p0 == pytest.approx(e, abs=1e-12)


def test_identity_collisions():
    p = np.array([0.5, 1.0, -0.3])
    col = post_collision_rel(p, p, [0, 0, 1])
    np.testing.assert_array_equal(col.p_post.p, p)
    col = post_collision_rel([1, 0, 0], [0, 0, 0], [0, 0, 1])
    np.testing.assert_array_equal(col.p_post.p, [1, 0, 0])
    np.testing.assert_array_equal(col.q_post.p, [0, 0, 0])


def test_symmetric_deflection():
    col = post_collision_rel([0.5, 0, 0], [-0.5, 0, 0], [0, 1, 0])
    np.testing.assert_allclose(col.p_post.p + col.q_post.p, 0.0, atol=1e-14)
    assert col.p_post.p0 == pytest.approx(col.q_post.p0, abs=1e-14)


def test_conservation_on_many_random_collisions():
    p, q, om = _random_triples(100_000, 5.0, 7)
    pp, qp = post_momenta(p, q, om)
    assert np.max(np.abs(pp + qp - p - q)) <= 1e-10
    e0 = energy(p) + energy(q)
    e1 = energy(pp) + energy(qp)
    assert np.max(np.abs(e1 - e0) / e0) <= 1e-10
    P, Q, PP, QP = four(p), four(q), four(pp), four(qp)
    s0, s1 = mdot(P + Q, P + Q), mdot(PP + QP, PP + QP)
    g0 = 0.5 * np.sqrt(np.maximum(-mdot(P - Q, P - Q), 0))
    g1 = 0.5 * np.sqrt(np.maximum(-mdot(PP - QP, PP - QP), 0))
    assert np.max(np.abs(s1 - s0) / s0) <= 1e-10
    assert np.max(np.abs(g1 - g0) / (1 + g0)) <= 1e-10
    assert np.max(np.abs(s0 - 4 * (1 + g0 ** 2)) / s0) <= 1e-10


@given(vec, vec, unit)
def test_collision_invariants(p, q, om):
    col = post_collision_rel(p, q, om)
    before, after = invariants_sg(p, q), invariants_sg(col.p_post.p, col.q_post.p)
    assert abs(after.s - before.s) <= 1e-10 * before.s
    assert abs(after.g - before.g) <= 1e-10 * (1 + before.g)


def test_scattering_angle_convention():
    p, q = np.array([1.0, 0.5, 0]), np.array([-0.5, 0.2, 0.1])
    # forward limit (no momentum exchanged) maps to theta = pi
    assert scattering_cos_raw(p, q, p, q) == pytest.approx(-1.0, abs=1e-14)
    assert scattering_angle(p, q, p, q) == pytest.approx(np.pi)
    # exchange gives the unclamped value 3
    assert scattering_cos_raw(p, q, q, p) == pytest.approx(3.0, abs=1e-12)
    assert scattering_angle(p, q, q, p) == 0.0
    with pytest.raises(DegenerateCollisionError):
        scattering_cos_raw(p, p, p, p)


@given(vec, vec, unit)
def test_scattering_angle_range(p, q, om):
    if np.allclose(p, q):
        return
    col = post_collision_rel(p, q, om)
    th = col.theta
    assert np.isfinite(th) and 0.0 <= th <= np.pi


def test_kernel_B_examples():
    c1 = RelativisticConstantSigma(1.0)
    assert kernel_B(0.0, 1.0, c1) == 0.0
    assert kernel_B(1.0, 1.0, c1) == pytest.approx(np.sqrt(2.0), abs=1e-15)
    mx = RelativisticMaxwellian.from_function(lambda th: np.ones_like(th))
    assert kernel_B(0.0, 0.5, mx) == pytest.approx(1.0, abs=1e-15)
    # the cancelled form matches the composed formula away from g = 0
    for g in (1e-6, 0.3, 2.0):
        composed = 0.5 * g * np.sqrt(4 * (1 + g * g)) * mx.sigma(g, 0.5)
        assert kernel_B(g, 0.5, mx) == pytest.approx(composed, rel=1e-12)
    with pytest.raises(ConfigurationError):
        kernel_B(1.0, 1.0, ClassicalHardSphere())


def test_kernel_k_examples():
    c1 = RelativisticConstantSigma(1.0)
    p = np.array([0.4, 0.1, -0.3])
    assert kernel_k(p, p, [1, 0, 0], c1) == 0.0
    assert kernel_k([1, 0, 0], [0, 0, 0], [0, 0, 1], c1) == 0.0
    k = kernel_k([1, 0, 0], [0, 0, 0], [1, 0, 0], c1)
    # s = 2 + 2 sqrt 2, e = 1 + sqrt 2, |w.(q^ - p^)| = 1/sqrt 2, den = e^2 - 1
    e = 1 + np.sqrt(2)
    expect = 4 * (2 + 2 * np.sqrt(2)) * e * e * (1 / np.sqrt(2)) / (e * e - 1) ** 2
    assert k == pytest.approx(expect, rel=1e-13)
    assert k > 0


@given(vec, vec, unit)
def test_kernel_k_even_in_omega(p, q, om):
    c1 = RelativisticConstantSigma(1.0)
    assert kernel_k(p, q, om, c1) == pytest.approx(kernel_k(p, q, -om, c1), rel=1e-12, abs=1e-300)


def test_excentricity_examples():
    assert excentricity([0, 0, 0], [0, 0, 0], [0, 0, 1]) == 1.0
    assert excentricity([1, 0, 0], [0, 0, 0], [0, 0, 1]) == 1.0
    p, q = np.array([1.0, 0, 0]), np.array([-1.0, 0, 0])
    bound = (1 + p @ p) * (1 + q @ q)
    om, *_ = ellipsoid_points(p, q, 8)
    alphas = np.array([excentricity(p, q, w) for w in om])
    assert np.all((alphas >= 1 / bound) & (alphas <= bound))


@given(vec, vec, unit)
def test_excentricity_bound(p, q, om):
    a = excentricity(p, q, om)
    bound = (1 + p @ p) * (1 + q @ q)
    assert 1 / bound <= a <= bound


def test_ellipsoid_degenerate_and_symmetric():
    p = np.array([0.3, 0.3, 0.3])
    _, pp, qp = ellipsoid_points(p, p, 4)
    np.testing.assert_array_equal(pp, np.broadcast_to(p, pp.shape))
    _, pp, qp = ellipsoid_points([1, 0, 0], [-1, 0, 0], 16)
    mirror = lambda x: np.round(x * [-1, 1, 1], 10) + 0.0  # noqa: E731
    a = {tuple(r) for r in mirror(pp)}
    b = {tuple(r) for r in np.round(qp, 10) + 0.0}
    assert a == b


def test_ellipsoid_fit_is_genuine_ellipsoid():
    _, pp, _ = ellipsoid_points([2, 0, 0], [0, 0, 0], 16)
    fit = fit_quadric(pp)
    assert fit.is_ellipsoid
    assert fit.residual < 1e-8
    ev = np.sort(fit.eigenvalues)
    assert ev[-1] - ev[0] > 1e-3 * ev[-1]


@pytest.mark.parametrize("chi", [0.5, -0.5])
def test_boost_covariance(chi):
    p, q, om = _random_triples(200, 2.0, 11)
    pp, qp = post_momenta(p, q, om)
    frames = [four(x) for x in (p, q, pp, qp)]
    moved = [boost(x, chi, axis=0) for x in frames]
    for P in moved:
        np.testing.assert_allclose(mdot(P, P), 1.0, atol=1e-10)
    for i in range(len(p)):
        a = [x[i, 1:] for x in frames]
        b = [x[i, 1:] for x in moved]
        ia, ib = invariants_sg(a[0], a[1]), invariants_sg(b[0], b[1])
        assert ib.s == pytest.approx(ia.s, rel=1e-8)
        assert ib.g == pytest.approx(ia.g, rel=1e-8, abs=1e-8)
        assert scattering_cos_raw(*b) == pytest.approx(scattering_cos_raw(*a), abs=1e-8)


def test_classical_limit():
    p, q, om = _random_triples(2000, 1e-3, 3)
    for i in range(len(p)):
        col = post_collision_rel(p[i], q[i], om[i])
        vp, _ = post_collision(p[i], q[i], om[i])
        np.testing.assert_allclose(col.p_post.p - p[i], vp - p[i], atol=1e-5)
        assert np.linalg.norm(col.p_post.p - vp) <= 1e-8
