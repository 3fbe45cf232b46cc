import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gainboltz.core_model import (
    ConfigurationError,
    DistributionField,
    FourMomentum,
    RelativisticConstantSigma,
    RelativisticMaxwellian,
    as_vec3,
    energy,
    lattice_points,
    make_sphere_quadrature,
    make_velocity_grid,
    trilinear,
)

BALL = 4.0 * np.pi / 3.0


def test_coarse_grid_spacing_and_volume():
    g = make_velocity_grid(1.0, 4)
    assert g.h == 0.5
    assert np.all(g.weights == 0.125)
    assert np.all(np.linalg.norm(g.points, axis=1) <= 1.0)
    assert abs(g.total_weight - BALL) / BALL <= 0.35


def test_grid_nodes_are_exactly_the_cell_centres_in_the_ball():
    g = make_velocity_grid(1.0, 8)
    c = 0.25 * (np.arange(8) - 3.5)
    X, Y, Z = np.meshgrid(c, c, c, indexing="ij")
    cand = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    expect = cand[np.einsum("ij,ij->i", cand, cand) <= 1.0]
    assert len(expect) == g.size
    assert set(map(tuple, expect)) == set(map(tuple, g.points))
    assert (8 // 2) ** 3 <= g.size <= 8 ** 3


def test_fine_grid_volume_within_two_percent():
    g = make_velocity_grid(1.0, 64)
    assert abs(g.total_weight - BALL) / BALL <= 0.02


def test_grid_scaling():
    a, b = make_velocity_grid(1.0, 4), make_velocity_grid(2.0, 4)
    np.testing.assert_array_equal(2.0 * a.points, b.points)
    assert b.cell_volume == 8.0 * a.cell_volume


def test_volume_error_shrinks_under_refinement():
    # lattice counting oscillates, so the decay is first order but not monotone
    ns = (16, 32, 64, 128, 256)
    errs = [abs(make_velocity_grid(1.0, n).total_weight - BALL) for n in ns]
    for n, e in zip(ns, errs):
        assert e <= 1.0 / n
    assert errs[-1] < errs[0] / 100


@pytest.mark.parametrize("R,n", [(0.0, 8), (-1.0, 8), (1.0, 3), (1.0, 7), (1.0, 2), (np.inf, 8)])
def test_invalid_grid_rejected(R, n):
    with pytest.raises(ConfigurationError):
        make_velocity_grid(R, n)


def test_grid_construction_is_deterministic():
    a, b = make_velocity_grid(1.3, 12), make_velocity_grid(1.3, 12)
    assert a.points.tobytes() == b.points.tobytes()
    assert a == b and hash(a) == hash(b)


def test_lattice_points_extend_the_grid():
    g = make_velocity_grid(1.0, 16)
    same = lattice_points(g.h, g.n, 1.0)
    assert set(map(tuple, same)) == set(map(tuple, g.points))
    bigger = lattice_points(g.h, g.n, 2.0)
    assert set(map(tuple, g.points)) <= set(map(tuple, bigger))
    assert np.max(np.linalg.norm(bigger, axis=1)) > 1.9


@pytest.mark.parametrize("m", [2, 3, 4, 8, 9, 16])
def test_sphere_rule_moments(m):
    sq = make_sphere_quadrature(m)
    assert sq.size == m * m
    assert np.all(sq.weights > 0)
    np.testing.assert_allclose(np.linalg.norm(sq.nodes, axis=1), 1.0, atol=1e-15)
    assert abs(sq.weights.sum() - 4 * np.pi) < 1e-10
    for c in (np.array([1.0, 0, 0]), np.array([0.3, -2.0, 0.7])):
        assert abs(sq.integrate(lambda n: n @ c)) < 1e-10


def test_sphere_rule_second_moment_and_constant():
    sq = make_sphere_quadrature(8)
    assert abs(sq.integrate(lambda n: np.ones(len(n))) - 4 * np.pi) < 1e-12
    assert abs(sq.integrate(lambda n: n[:, 2] ** 2) - 4 * np.pi / 3) < 1e-10


def test_sphere_rule_kinked_integrand():
    # the kink of max(0, n.u) sits on the equator; plain Gauss-Legendre in
    # cos(theta) converges only at second order there
    u = np.array([0.0, 0.0, 2.0])
    kink = lambda n: np.maximum(0, n @ u)  # noqa: E731
    ref = make_sphere_quadrature(128).integrate(kink)
    assert abs(ref - 2 * np.pi) < 5e-4
    errs = [abs(make_sphere_quadrature(m).integrate(kink) - ref) for m in (8, 16, 32, 64)]
    assert errs[0] == pytest.approx(0.0721, abs=1e-3)
    for a, b in zip(errs, errs[1:]):
        assert 3.0 < a / b < 5.0


def test_sphere_rule_rejects_small_order():
    with pytest.raises(ConfigurationError):
        make_sphere_quadrature(1)


@pytest.mark.parametrize("m", [4, 8, 12])
def test_dihedral_node_set(m):
    sq = make_sphere_quadrature(m)
    assert sq.dihedral_symmetric
    nodes = set(map(tuple, sq.nodes))
    for op in (
        lambda x: x * [-1, 1, 1],
        lambda x: x * [1, -1, 1],
        lambda x: x * [1, 1, -1],
        lambda x: x[:, [1, 0, 2]],
    ):
        assert set(map(tuple, op(sq.nodes))) == nodes


@pytest.mark.parametrize("m", [3, 4, 6, 7, 8])
def test_hemisphere_rule_matches_full_rule_on_even_integrands(m):
    sq = make_sphere_quadrature(m)
    nodes, w = sq.hemisphere()
    f = lambda n: np.abs(n @ [0.3, -0.5, 0.8]) ** 1.5 + n[:, 0] ** 2  # noqa: E731
    assert abs(np.sum(w * f(nodes)) - sq.integrate(f)) < 1e-12
    assert abs(w.sum() - 4 * np.pi) < 1e-12


def test_four_momentum_energy():
    assert energy(np.zeros(3)) == 1.0
    assert energy([0, 0, np.sqrt(3)]) == pytest.approx(2.0, abs=1e-15)
    assert energy([3, 0, 4]) == pytest.approx(np.sqrt(26))


@given(st.lists(st.floats(-50, 50), min_size=3, max_size=3))
def test_four_momentum_mass_shell(p):
    fm = FourMomentum(p)
    assert fm.p0 >= 1.0
    assert abs(fm.minkowski_norm2() - 1.0) <= 1e-12 * fm.p0 ** 2


def test_vec3_validation():
    with pytest.raises(ValueError):
        as_vec3([1, 2])
    with pytest.raises(ValueError):
        as_vec3([1, np.nan, 0])


def test_field_validation():
    g = make_velocity_grid(1.0, 4)
    with pytest.raises(ValueError):
        DistributionField(g, -np.ones(g.size))
    with pytest.raises(ValueError):
        DistributionField(g, np.ones(g.size + 1))
    with pytest.raises(ValueError):
        DistributionField(g, np.full(g.size, np.inf))


def test_indicator_is_exact_mask():
    g = make_velocity_grid(1.0, 16)
    chi = DistributionField.indicator(g, 0.5, 3.0)
    r = np.linalg.norm(g.points, axis=1)
    np.testing.assert_array_equal(chi.values, np.where(r <= 0.5, 3.0, 0.0))


def test_trilinear_reproduces_nodes_and_linear_functions():
    g = make_velocity_grid(2.0, 16)
    lin = lambda x: 3.0 + x @ [0.5, -0.25, 1.0]  # noqa: E731
    f = DistributionField.from_function(g, lin)
    np.testing.assert_allclose(f(g.points), f.values, rtol=0, atol=1e-14)
    # away from the boundary all 8 neighbours exist, so linear data are exact
    pts = np.random.default_rng(1).uniform(-0.8, 0.8, (200, 3))
    np.testing.assert_allclose(f(pts), lin(pts), atol=1e-12)


def test_trilinear_zero_extension():
    g = make_velocity_grid(1.0, 8)
    dense = DistributionField.indicator(g, 1.0).dense()
    far = np.array([[5.0, 0, 0], [0, -3.0, 0], [1.3, 1.3, 1.3]])
    np.testing.assert_array_equal(trilinear(g, dense, far), 0.0)


def test_kernel_specs():
    with pytest.raises(ConfigurationError):
        RelativisticConstantSigma(0.0)
    with pytest.raises(ConfigurationError):
        RelativisticMaxwellian(np.linspace(0, np.pi, 5), -np.ones(5))
    with pytest.raises(ConfigurationError):
        RelativisticMaxwellian(np.linspace(0, 3, 5), np.ones(5))
    mx = RelativisticMaxwellian.from_function(lambda th: 1.0 + np.cos(th) ** 2)
    assert mx.angular(0.0) == pytest.approx(2.0)
    assert mx == RelativisticMaxwellian.from_function(lambda th: 1.0 + np.cos(th) ** 2)
