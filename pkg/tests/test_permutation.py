from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sevtox.contrasts import dunnett, williams
from sevtox.permutation import (
    NoTestableEndpoint,
    conditional_moments,
    count_permutations,
    exact_distribution,
    maxmax_test,
)
from sevtox.tabular import Dataset, binarize

from conftest import random_dataset


def enumerate_moments(g, h):
    """Empirical mean and covariance of vec(T) over all n! relabelings."""
    vals = np.array([(g[list(p)].T @ h).ravel(order="F") for p in permutations(range(len(g)))])
    return vals.mean(axis=0), np.cov(vals, rowvar=False, bias=True)


@pytest.mark.parametrize("seed", range(6))
def test_moments_match_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 7))
    g = rng.normal(size=(n, 2))
    h = rng.integers(0, 2, size=(n, 2)).astype(float)
    mu, sigma = conditional_moments(g, h)
    emp_mu, emp_sigma = enumerate_moments(g, h)
    assert np.allclose(mu.ravel(order="F"), emp_mu, atol=1e-10)
    assert np.allclose(sigma, emp_sigma, atol=1e-10)


def brute_force_adjusted(d, K, Y):
    """Single-step adjusted p by listing every distinct label arrangement."""
    h = Y.values.astype(float)
    arrangements = set(permutations(d.group_index.tolist()))

    def zmax(labels):
        labels = np.array(labels)
        g = K.coef.T[labels]
        mu, sigma = conditional_moments(g, h)
        sd = np.sqrt(np.diag(sigma)).reshape(mu.shape, order="F")
        return (g.T @ h - mu) / sd

    z_obs = zmax(d.group_index)
    maxima = np.array([zmax(a).max() for a in arrangements])
    return np.array([[np.mean(maxima >= z - 1e-9) for z in row] for row in z_obs])


@pytest.mark.parametrize("sizes", [(2, 2, 2), (3, 2, 2), (2, 3)])
def test_exact_matches_brute_force(sizes):
    rng = np.random.default_rng(sum(sizes))
    for _ in range(3):
        d = random_dataset(rng, sizes)
        Y = binarize(d)
        K = dunnett(d.group_sizes())
        try:
            res = maxmax_test(d, K, Y, mode="exact")
        except NoTestableEndpoint:
            continue
        if res.degenerate.any():
            continue
        assert np.allclose(res.adjusted_p, brute_force_adjusted(d, K, Y), atol=1e-12)


def test_count_permutations():
    assert count_permutations([2, 2, 2]) == 90
    assert count_permutations([14, 12, 13, 14, 14], cap=10**6) == "too large"


def test_exact_vs_montecarlo():
    d = Dataset(("a", "b", "c"), [0, 0, 0, 1, 1, 1, 2, 2, 2], [0, 1, 0, 1, 1, 2, 2, 2, 1], (0, 1, 2))
    Y = binarize(d)
    K = williams(d.group_sizes())
    e = maxmax_test(d, K, Y, mode="exact")
    m = maxmax_test(d, K, Y, mode="montecarlo", B=50_000, seed=11)
    assert e.n_arrangements == 1680
    assert np.allclose(m.adjusted_p, e.adjusted_p, atol=4 * np.sqrt(0.25 / 50_000))


def test_exact_probabilities_sum_to_one():
    rng = np.random.default_rng(3)
    d = random_dataset(rng, (3, 3, 2))
    dist = exact_distribution(d, dunnett(d.group_sizes()), binarize(d))
    assert dist.probs.sum() == pytest.approx(1.0)
    assert dist.tail(np.array([-np.inf])) == pytest.approx(1.0)


def test_adjusted_dominates_raw_and_ordering():
    rng = np.random.default_rng(5)
    d = random_dataset(rng, (5, 5, 5))
    res = maxmax_test(d, dunnett(d.group_sizes()), binarize(d), B=2000, seed=1)
    assert (res.adjusted_p >= res.raw_p - 1e-12).all()
    z, p = res.z.ravel(), res.adjusted_p.ravel()
    order = np.argsort(-z)
    assert (np.diff(p[order]) >= -1e-12).all()


def test_seed_and_thread_determinism():
    rng = np.random.default_rng(8)
    d = random_dataset(rng, (8, 8, 8))
    K, Y = dunnett(d.group_sizes()), binarize(d)
    a = maxmax_test(d, K, Y, B=5000, seed=42, mode="montecarlo", threads=1)
    b = maxmax_test(d, K, Y, B=5000, seed=42, mode="montecarlo", threads=4)
    assert np.array_equal(a.adjusted_p, b.adjusted_p)
    assert np.array_equal(a.raw_p, b.raw_p)


def test_input_order_invariance():
    rng = np.random.default_rng(9)
    d = random_dataset(rng, (6, 6, 6))
    perm = rng.permutation(d.n)
    shuffled = Dataset(d.groups, d.group_index[perm], d.severity[perm], d.grades)
    K = dunnett(d.group_sizes())
    a = maxmax_test(d, K, binarize(d), B=3000, seed=5, mode="montecarlo")
    b = maxmax_test(shuffled, K, binarize(shuffled), B=3000, seed=5, mode="montecarlo")
    assert np.array_equal(a.adjusted_p, b.adjusted_p)


def test_degenerate_component_excluded():
    # control and treatment all grade 0 except one subject: column >1 is constant
    d = Dataset(("c", "t"), [0, 0, 0, 1, 1, 1], [0, 0, 0, 0, 1, 1], (0, 1, 2))
    res = maxmax_test(d, dunnett([3, 3]), binarize(d), mode="exact")
    assert res.degenerate[0, 1]
    assert res.adjusted_p[0, 1] == 1.0
    assert res.adjusted_p[0, 0] == pytest.approx(0.2)
    assert any("zero permutation variance" in w for w in res.warnings)


def test_all_constant_raises():
    d = Dataset(("c", "t"), [0, 0, 1, 1], [1, 1, 1, 1], (0, 1, 2))
    with pytest.raises(NoTestableEndpoint):
        maxmax_test(d, dunnett([2, 2]), binarize(d))


def test_alternatives_mirror():
    d = Dataset(("c", "t"), [0, 0, 0, 1, 1, 1], [0, 0, 1, 1, 2, 2], (0, 1, 2))
    flipped = Dataset(("c", "t"), d.group_index, 2 - d.severity, d.grades)
    K = dunnett([3, 3])
    g = maxmax_test(d, K, binarize(d, [0]), alternative="greater", mode="exact")
    l = maxmax_test(flipped, K, binarize(flipped, [1]), alternative="less", mode="exact")
    assert np.allclose(g.adjusted_p, l.adjusted_p)
    two = maxmax_test(d, K, binarize(d, [0]), alternative="two-sided", mode="exact")
    assert (two.adjusted_p >= g.adjusted_p - 1e-12).all()


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(0, 2), min_size=6, max_size=6), st.integers(0, 2**16))
def test_pvalues_in_unit_interval(sev, seed):
    d = Dataset(("a", "b", "c"), [0, 0, 1, 1, 2, 2], sev, (0, 1, 2))
    try:
        res = maxmax_test(d, dunnett([2, 2, 2]), binarize(d), B=200, seed=seed)
    except NoTestableEndpoint:
        return
    assert ((res.adjusted_p > 0) & (res.adjusted_p <= 1)).all()
