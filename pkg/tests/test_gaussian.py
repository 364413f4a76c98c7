import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats
from scipy.special import ndtr

from maxstable.gaussian import (
    CovarianceError,
    FractionalVariogram,
    build_increment_cov,
    factorize,
    fbm_variogram,
    mvn_rect_prob,
    mvn_sample,
    quadratic_time_variogram,
    variogram_from_config,
)
from maxstable.rng import StreamBatch, rng_stream


def test_factorize_identity_and_singular():
    f = factorize(np.eye(2))
    assert f.jitter == 0.0 and np.allclose(f.L, np.eye(2))
    g = factorize([[1.0, 1.0], [1.0, 1.0]])
    assert g.jitter > 0
    assert np.allclose(g.L @ g.L.T, np.ones((2, 2)) + g.jitter * np.eye(2))


def test_factorize_zero_variance_coordinates():
    f = factorize([[0.0, 0.0], [0.0, 4.0]])
    assert f.degenerate == (0,) and f.jitter == 0.0
    assert np.allclose(f.L, [[0.0, 0.0], [0.0, 2.0]])
    with pytest.raises(CovarianceError):
        factorize([[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(CovarianceError):
        factorize([[1.0, 0.5], [0.0, 1.0]])


def test_mvn_sample_examples():
    z = mvn_sample([0.0], [[1.0]], StreamBatch.for_replicates(0, 100_000))
    assert abs(z.var() - 1.0) < 0.02
    c = [[1.0, 0.5], [0.5, 1.0]]
    z = mvn_sample([1.0, -1.0], c, StreamBatch.for_replicates(1, 100_000))
    assert np.allclose(z.mean(axis=0), [1.0, -1.0], atol=0.02)
    assert abs(np.corrcoef(z.T)[0, 1] - 0.5) < 0.02
    single = mvn_sample([0.0, 0.0], c, rng_stream(1, 0))
    assert single.shape == (2,)


def test_ndtr_matches_erfc_oracle():
    for x in np.linspace(-38, 9, 20_001):
        ref = 0.5 * math.erfc(-x / math.sqrt(2))
        got = float(ndtr(x))
        assert abs(got - ref) <= 1e-15
        assert math.isclose(got, ref, rel_tol=1e-12, abs_tol=1e-300)


@pytest.mark.parametrize(
    "upper,C,expected",
    [
        ([0.0], [[1.0]], 0.5),
        ([0.0, 0.0], np.eye(2), 0.25),
        ([0.0, 0.0], [[1.0, 0.5], [0.5, 1.0]], 1 / 3),
        ([0.0, 0.0, 0.0], [[1, 0.5, 0.5], [0.5, 1, 0.5], [0.5, 0.5, 1]], 0.25),
    ],
)
def test_rect_prob_orthant_oracles(upper, C, expected):
    m = len(upper)
    e = mvn_rect_prob(np.full(m, -np.inf), upper, np.zeros(m), C, target_rel_err=1e-5)
    assert abs(e.value - expected) < max(1e-5, 5 * e.stderr)


def test_rect_prob_against_scipy():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(4, 4))
    C = A @ A.T + 0.5 * np.eye(4)
    up = rng.normal(size=4)
    e = mvn_rect_prob(np.full(4, -np.inf), up, np.zeros(4), C, target_rel_err=1e-5)
    ref = stats.multivariate_normal(np.zeros(4), C).cdf(up)
    assert abs(e.value - ref) < 1e-4


def test_rect_prob_diagonal_is_product():
    lo = np.array([-1.0, -np.inf, 0.5])
    up = np.array([1.0, 0.3, np.inf])
    sd = np.array([1.0, 2.0, 0.5])
    e = mvn_rect_prob(lo, up, np.zeros(3), np.diag(sd**2), target_rel_err=1e-6)
    exact = np.prod(ndtr(up / sd) - ndtr(lo / sd))
    assert abs(e.value - exact) < 1e-6


@given(st.floats(-2, 2), st.floats(0, 2), st.floats(-0.9, 0.9))
def test_rect_prob_monotone_in_upper(u, du, rho):
    C = [[1.0, rho], [rho, 1.0]]
    lo = [-np.inf, -np.inf]
    a = mvn_rect_prob(lo, [u, 0.0], [0.0, 0.0], C, target_rel_err=1e-6, stream=rng_stream(1))
    b = mvn_rect_prob(lo, [u + du, 0.0], [0.0, 0.0], C, target_rel_err=1e-6, stream=rng_stream(1))
    assert b.value >= a.value - 4 * (a.stderr + b.stderr) - 1e-9


def test_rect_prob_degenerate_coordinates():
    C = [[0.0, 0.0], [0.0, 1.0]]
    assert mvn_rect_prob([-1, -np.inf], [1, 0], [0, 0], C).value == 0.5
    assert mvn_rect_prob([0.5, -np.inf], [1, 0], [0, 0], C).value == 0.0
    assert mvn_rect_prob([1, 1], [1, 2], [0, 0], np.eye(2)).value == 0.0
    with pytest.raises(ValueError):
        mvn_rect_prob([1], [0], [0], [[1.0]])
    with pytest.raises(ValueError):
        mvn_rect_prob(np.zeros(65), np.ones(65), np.zeros(65), np.eye(65))


def test_rect_prob_reports_budget():
    C = [[1, 0.9, 0.8], [0.9, 1, 0.9], [0.8, 0.9, 1]]
    e = mvn_rect_prob([-np.inf] * 3, [0.1, 0.2, -0.3], [0, 0, 0], C, target_rel_err=1e-12, max_points=1 << 15)
    assert e.budget_hit


def test_fractional_variogram():
    v = FractionalVariogram(2.0, 1.0)
    assert v.gamma(0, 0, np.array([0.0]), np.array([3.0])) == 6.0
    assert v.stationary
    with pytest.raises(ValueError):
        FractionalVariogram(1.0, 2.5)
    w = variogram_from_config(v.to_config())
    assert w.gamma(0, 0, np.array([1.0]), np.array([2.5])) == 3.0


def test_fbm_variogram_matches_brownian():
    v = fbm_variogram()
    t, s = np.array([1.0]), np.array([4.0])
    assert np.isclose(v.gamma(0, 0, t, s), 3.0)
    assert np.isclose(v.cov(0, 0, t, s), 1.0)
    c = fbm_variogram(corr=[[1.0, 0.5], [0.5, 1.0]])
    assert c.d == 2 and not c.stationary
    # cross variogram at one location: 2 (1 - rho) |t|
    assert np.isclose(c.gamma(0, 1, t, t), 1.0)
    with pytest.raises(ValueError):
        fbm_variogram(corr=[[1.0, 2.0], [2.0, 1.0]])


def test_quadratic_time_variogram():
    v = quadratic_time_variogram()
    assert np.isclose(v.gamma(0, 0, np.array([1.0]), np.array([2.0])), 9.0)


def test_increment_cov_example():
    v = FractionalVariogram(1.0, 1.0)
    mean, C = build_increment_cov(v, (0, np.array([0.0])), (np.array([0, 0]), np.array([[1.0], [3.0]])))
    assert np.allclose(mean, [-0.5, -1.5])
    assert np.allclose(C, [[1.0, 1.0], [1.0, 3.0]])


def test_increment_cov_anchor_coordinate_is_zero():
    v = FractionalVariogram(1.0, 1.0)
    mean, C = build_increment_cov(v, (0, np.array([0.0])), (np.array([0, 0]), np.array([[0.0], [2.0]])))
    assert mean[0] == 0 and np.all(C[0] == 0) and C[1, 1] == 2.0


def test_increment_cov_rejects_invalid_variogram():
    class Quartic(FractionalVariogram):
        # |t - s|^4 is not conditionally negative definite
        def gamma(self, i, j, t, s):
            return np.sum((np.asarray(t) - np.asarray(s)) ** 4, axis=-1)

    with pytest.raises(CovarianceError, match="invalid variogram"):
        build_increment_cov(Quartic(), (0, np.array([0.0])), (np.zeros(2, int), np.array([[1.0], [2.0]])))
