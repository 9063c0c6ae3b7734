import numpy as np
import pytest
from scipy import stats

from sevtox.models import fit_glm
from sevtox.tabular import binarize
from sevtox.tukeytrend import tukey_trend_fit, tukey_trend_test

from conftest import basophilia

TREND_DOSES = {"1": 0.0, "2": 10.0, "4": 50.0, "5": 150.0}


def four_dose_design():
    d = basophilia().select(list(TREND_DOSES))
    return d.with_doses(list(TREND_DOSES.values()))


def test_reduction_to_wald():
    d = four_dose_design()
    Y = binarize(d, [1])
    stack = tukey_trend_fit(d, Y, scalings=["arithmetic"])
    res = tukey_trend_test(stack, alternative="two-sided")
    x = d.subject_doses()
    fit = fit_glm(np.column_stack([np.ones(d.n), x]), Y.values[:, 0], "binomial")
    z = fit.coef[1] / fit.se[1]
    assert stack.estimate[0] == pytest.approx(fit.coef[1], rel=1e-10)
    assert stack.se[0] == pytest.approx(fit.se[1], rel=1e-10)
    assert res.adjusted_p[0] == pytest.approx(2 * stats.norm.sf(abs(z)), abs=1e-10)


def test_affine_invariance():
    d = basophilia().with_doses([0, 1, 2, 3, 4])
    Y = binarize(d, [1, 2])
    stack = tukey_trend_fit(d, Y, scalings=["arithmetic", "ordinal"])
    z = stack.estimate / stack.se
    assert np.allclose(z[0::2], z[1::2], atol=1e-8)
    shifted = tukey_trend_fit(d.with_doses([5, 7, 9, 11, 13]), Y, scalings=["arithmetic"])
    assert np.allclose(shifted.estimate / shifted.se, z[0::2], atol=1e-8)


def test_covariance_psd_and_diagonal():
    d = four_dose_design()
    stack = tukey_trend_fit(d, binarize(d), include_raw_score=True)
    assert np.allclose(np.diag(stack.cov), stack.se ** 2, atol=1e-8)
    assert np.linalg.eigvalsh(stack.cov).min() > -1e-12
    assert len(stack.labels) == 9
    assert stack.labels[0] == "score.ari"


def test_duplicate_endpoint_identical():
    d = four_dose_design()
    Y = binarize(d, [1])
    both = np.column_stack([Y.values, Y.values])
    res = tukey_trend_test(tukey_trend_fit(d, both))
    assert np.allclose(res.statistic[:3], res.statistic[3:])
    assert np.allclose(res.adjusted_p[:3], res.adjusted_p[3:])


def test_bootstrap_correlation():
    d = basophilia().with_doses([0, 1, 2, 3, 4])
    Y = binarize(d, [1])
    stack = tukey_trend_fit(d, Y, scalings=["arithmetic", "arithmetic-log"], zero_log=-1.0)
    rng = np.random.default_rng(2)
    x_ari = d.subject_doses()
    x_log = np.log(np.where(x_ari > 0, x_ari, np.exp(-1.0)))
    y = Y.values[:, 0]
    boot = []
    for _ in range(2000):
        i = rng.integers(0, d.n, d.n)
        slopes = []
        for x in (x_ari, x_log):
            fit = fit_glm(np.column_stack([np.ones(d.n), x[i]]), y[i], "binomial")
            slopes.append(fit.coef[1])
        boot.append(slopes)
    emp = np.corrcoef(np.array(boot), rowvar=False)[0, 1]
    assert abs(emp - stack.corr[0, 1]) < 0.05


def test_needs_two_doses():
    d = basophilia().with_doses([1, 1, 1, 1, 1])
    with pytest.raises(ValueError):
        tukey_trend_fit(d, binarize(d))


def test_separated_cell_excluded():
    d = basophilia().select(["1", "5"]).with_doses([0, 1])
    # >2 has one event in the control and four at the top dose; craft a
    # perfectly separated column instead
    y = (d.group_index == 1).astype(float)
    stack = tukey_trend_fit(d, np.column_stack([y, binarize(d, [1]).values]), scalings=["arithmetic"])
    assert stack.flagged.tolist() == [True, False]
    res = tukey_trend_test(stack)
    assert res.adjusted_p[0] == 1.0 and res.degenerate[0]
