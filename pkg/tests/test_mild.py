import numpy as np
import pytest

from gainboltz.core_model import (
    ConfigurationError,
    RelativisticConstantSigma,
    make_sphere_quadrature,
    make_velocity_grid,
)
from gainboltz.gain import delta_on_grid
from gainboltz.mild import (
    DepthError,
    InhomogeneousConfig,
    PicardEvaluator,
    check_shrinking_ball,
    eval_phi,
    eval_picard,
    homogeneous_picard,
    negative_control,
    reduced_homogeneous_blowup,
    time_ladder,
)

CFG = InhomogeneousConfig(1.0, 1.5, 1.0, 1.0)


@pytest.fixture(scope="module")
def ev():
    return PicardEvaluator(CFG, k_max=3)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        InhomogeneousConfig(1.0, 0.5, 1.0, 1.0)
    with pytest.raises(ConfigurationError):
        InhomogeneousConfig(1.0, 1.0, 1.0, 1.0)
    with pytest.raises(ConfigurationError):
        InhomogeneousConfig(0.0, 2.0, 1.0, 1.0)
    with pytest.raises(ConfigurationError):
        InhomogeneousConfig(1.0, 2.0, 1.0, 1.0, kernel=RelativisticConstantSigma(1.0))
    with pytest.raises(ConfigurationError):
        PicardEvaluator(CFG, k_max=0)


def test_phi_closed_balls():
    assert eval_phi([0, 0, 0], [0, 0, 0], CFG) == 1.0
    assert eval_phi([1.5, 0, 0], [0, 0, 1.0], CFG) == 1.0
    assert eval_phi([1.5 + 1e-12, 0, 0], [0, 0, 0], CFG) == 0.0
    assert eval_phi([0, 0, 0], [0, 1.0 + 1e-12, 0], CFG) == 0.0


def test_time_ladder():
    nodes, weights = time_ladder(2.5, 3)
    assert len(nodes) == 9
    assert np.all((nodes > 0) & (nodes < 2.5))
    assert weights.sum() == pytest.approx(2.5, abs=1e-14)
    assert np.sum(weights * nodes ** 5) == pytest.approx(2.5 ** 6 / 6, rel=1e-12)
    assert len(time_ladder(0.0, 3)[0]) == 0


def test_zeroth_and_first_iterate(ev):
    assert eval_picard(0, 0.5, [0, 0, 0], [0, 0, 0], ev) == 0.0
    # free streaming: c0 chi1(x - t v) chi2(v)
    assert eval_picard(1, 0.5, [1.5, 0, 0], [1.0, 0, 0], ev) == 1.0
    assert eval_picard(1, 0.5, [1.5, 0, 0], [-1.0, 0, 0], ev) == 0.0
    assert eval_picard(1, 0.5, [0, 0, 0], [0, 0, 1.01], ev) == 0.0


def test_initial_time_reproduces_phi(ev):
    rng = np.random.default_rng(0)
    for _ in range(10):
        x, v = rng.uniform(-1.7, 1.7, 3), rng.uniform(-1.1, 1.1, 3)
        for k in (1, 2, 3):
            assert eval_picard(k, 0.0, x, v, ev) == eval_phi(x, v, CFG)


def test_depth_error(ev):
    with pytest.raises(DepthError):
        eval_picard(4, 0.1, [0, 0, 0], [0, 0, 0], ev)


def test_iterates_increase_and_respect_supports(ev):
    rng = np.random.Generator(np.random.Philox(3))
    n = 12
    t = np.full(n, 0.5)
    x = rng.uniform(-2.2, 2.2, (n, 3))
    v = rng.uniform(-0.8, 0.8, (n, 3))
    prev = np.zeros(n)
    for k in (1, 2, 3):
        cur = ev.evaluate(k, t, x, v)
        assert np.all(cur >= prev)
        prev = cur
    # finite propagation speed
    far = np.array([[0, 0, CFG.c1 + 0.5 * CFG.c2 + 1e-9], [2.1, 0.0, 0.0]])
    assert np.all(ev.evaluate(3, np.full(2, 0.5), far, np.zeros((2, 3))) == 0.0)
    fast = np.array([[0, 0, 1.0 + 1e-9], [0.8, 0.8, 0.0]])
    assert np.all(ev.evaluate(3, np.full(2, 0.5), np.zeros((2, 3)), fast) == 0.0)


def test_small_time_origin_value(ev):
    f2 = eval_picard(2, 0.1, [0, 0, 0], [0, 0, 0], ev)
    f3 = eval_picard(3, 0.1, [0, 0, 0], [0, 0, 0], ev)
    assert f3 >= f2 >= CFG.c0
    assert f3 > CFG.c0


def test_memo_is_deterministic(ev):
    a = eval_picard(2, 0.3, [0.1, 0.2, 0.3], [0.1, 0, 0], ev)
    before = ev.evaluations
    b = eval_picard(2, 0.3, [0.1, 0.2, 0.3], [0.1, 0, 0], ev)
    assert a == b
    assert ev.evaluations == before
    fresh = PicardEvaluator(CFG, k_max=3)
    assert eval_picard(2, 0.3, [0.1, 0.2, 0.3], [0.1, 0, 0], fresh) == a


def test_shrinking_ball_homogeneity(ev):
    for k in (1, 2):
        chk = check_shrinking_ball(ev, k, 0.5, 40, 11)
        assert chk.max_discrepancy == 0.0
        assert len(chk.rows) == 40
    with pytest.raises(ConfigurationError):
        check_shrinking_ball(ev, 2, 1.0, 5, 1)


def test_negative_control(ev):
    fx, fy, d = negative_control(ev, 1, 0.5)
    assert d == 0.0 and fx == fy == CFG.c0
    fx, fy, d = negative_control(ev, 2, 0.5)
    assert d > 1e-3
    assert fx < fy


@pytest.mark.parametrize("k,t", [(2, 0.5), (2, 1.0), (3, 0.5)])
def test_agreement_with_independent_homogeneous_iterates(ev, k, t):
    for v in ([0.0, 0.0, 0.0], [0.3, -0.2, 0.4], [0.0, 0.9, 0.0]):
        a = eval_picard(k, t, [0, 0, 0], v, ev)
        b = homogeneous_picard(k, t, v, CFG)
        assert abs(a - b) <= 1e-8 * max(1.0, abs(b))


def test_reduction_branches_on_coarse_grid():
    grid, sq = make_velocity_grid(1.0, 8), make_sphere_quadrature(4)
    delta = delta_on_grid(grid, 1.0, CFG.kernel, sq)
    big = reduced_homogeneous_blowup(InhomogeneousConfig(10 / delta, 1.5, 1.0, 1.0), grid, sq)
    assert big.branch == "c0_large" and big.detected and big.consistent
    small = reduced_homogeneous_blowup(InhomogeneousConfig(0.01 / delta, 1.5, 1.0, 1.0), grid, sq)
    assert small.branch == "none" and not small.detected and small.consistent
    wide = reduced_homogeneous_blowup(InhomogeneousConfig(0.2 / delta, 7.0, 1.0, 6.0), grid, sq)
    assert wide.branch == "c1_large" and wide.predicted and wide.within_horizon
    assert wide.detected and wide.consistent
    with pytest.raises(ConfigurationError):
        reduced_homogeneous_blowup(CFG, make_velocity_grid(2.0, 8), sq)
