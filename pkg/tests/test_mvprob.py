import numpy as np
import pytest
from scipy import stats

from sevtox.mvprob import NotPSDError, mv_rectangle_prob


def equicorr(m, rho):
    return np.full((m, m), rho) + (1 - rho) * np.eye(m)


@pytest.mark.parametrize("m, rho, c", [(2, 0.5, 1.0), (4, 0.3, 2.0), (5, 0.7, 1.5), (3, -0.4, 0.5)])
def test_normal_matches_scipy(m, rho, c):
    R = equicorr(m, rho)
    res = mv_rectangle_prob(R, np.full(m, -np.inf), np.full(m, c), tol=1e-5, seed=1)
    ref = stats.multivariate_normal(np.zeros(m), R).cdf(np.full(m, c))
    assert res.converged
    assert res.value == pytest.approx(ref, abs=5e-5)


def test_independent_box_is_product():
    m = 4
    lo, hi = np.array([-1.0, -0.5, -2.0, 0.0]), np.array([1.0, 2.0, 0.3, np.inf])
    res = mv_rectangle_prob(np.eye(m), lo, hi, tol=1e-6)
    assert res.value == pytest.approx(np.prod(stats.norm.cdf(hi) - stats.norm.cdf(lo)), abs=1e-6)


def test_t_matches_scipy():
    R = equicorr(3, 0.5)
    res = mv_rectangle_prob(R, np.full(3, -np.inf), np.full(3, 2.0), df=8, tol=1e-5, seed=2)
    ref = stats.multivariate_t(np.zeros(3), R, df=8).cdf(np.full(3, 2.0))
    assert res.value == pytest.approx(ref, abs=2e-4)


def test_perfectly_correlated_coordinates_merge():
    R = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    res = mv_rectangle_prob(R, np.array([-np.inf, -np.inf, -1.0]), np.array([1.0, 0.5, 1.0]))
    expect = stats.norm.cdf(0.5) * (stats.norm.cdf(1) - stats.norm.cdf(-1))
    assert res.value == pytest.approx(expect, abs=1e-6)


def test_not_psd():
    R = np.array([[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]])
    with pytest.raises(NotPSDError):
        mv_rectangle_prob(R, -np.ones(3), np.ones(3))


def test_seed_reproducible():
    R = equicorr(6, 0.4)
    a = mv_rectangle_prob(R, np.full(6, -np.inf), np.full(6, 2.2), seed=9)
    b = mv_rectangle_prob(R, np.full(6, -np.inf), np.full(6, 2.2), seed=9)
    assert a.value == b.value and a.error == b.error
