import json

import numpy as np
import pytest

from sevtox.simulation import ConfigError, SimConfig, estimate_error_rates, parse_config, simulate_dataset

NULL = """
group_sizes = 5, 5, 5
grades = 1, 2, 3
probs = 0.5 0.3 0.2; 0.5 0.3 0.2; 0.5 0.3 0.2
nperm = 499
nsim = 40
seed = 3
"""


def test_parse_config():
    cfg = parse_config(NULL)
    assert cfg.group_sizes == (5, 5, 5)
    assert cfg.params["nperm"] == 499
    assert cfg.method == "perm-maxmax"


@pytest.mark.parametrize("edit, message", [
    (("nsim = 40", "nsim = 0"), "nsim"),
    (("0.5 0.3 0.2;", "0.5 0.3 0.3;"), "sum to 1"),
    (("seed = 3", "sede = 3"), "unknown key"),
    (("grades = 1, 2, 3", ""), "grades"),
])
def test_invalid_configs(edit, message):
    with pytest.raises(ConfigError, match=message):
        parse_config(NULL.replace(*edit))


def test_dataset_sizes_and_determinism():
    cfg = parse_config(NULL)
    a, b = simulate_dataset(cfg, 4), simulate_dataset(cfg, 4)
    assert np.array_equal(a.severity, b.severity)
    assert a.group_sizes().tolist() == [5, 5, 5]
    assert not np.array_equal(a.severity, simulate_dataset(cfg, 5).severity)


def test_zero_variance_control():
    cfg = SimConfig((6, 6), (0, 1, 2), [[1, 0, 0], [0.2, 0.3, 0.5]], nsim=5)
    for r in range(5):
        d = simulate_dataset(cfg, r)
        assert (d.samples()[0] == 0).all()


def test_grade_frequencies_converge():
    cfg = SimConfig((50, 50), (0, 1, 2), [[0.6, 0.3, 0.1], [0.2, 0.3, 0.5]], nsim=1, seed=11)
    counts = np.zeros((2, 3))
    reps = 1000
    for r in range(reps):
        d = simulate_dataset(cfg, r)
        for g, s in enumerate(d.samples()):
            counts[g] += np.bincount(s, minlength=3)
    freq = counts / (50 * reps)
    se = np.sqrt(cfg.probs * (1 - cfg.probs) / (50 * reps))
    assert (np.abs(freq - cfg.probs) <= 3 * se + 1e-12).all()


def test_report_shape_and_thread_independence():
    cfg = parse_config(NULL)
    one = estimate_error_rates(cfg, threads=1)
    four = estimate_error_rates(cfg, threads=4)
    assert one.to_json() == four.to_json()
    data = json.loads(one.to_json())
    assert len(data["hypotheses"]) == 4
    for h in list(data["hypotheses"].values()) + [data["familywise"]]:
        p = h["proportion"]
        assert 0 <= p <= 1
        assert h["se"] == pytest.approx(np.sqrt(p * (1 - p) / one.n_valid))
    assert "denominator" in data["policy"]


def test_single_replicate():
    cfg = parse_config(NULL.replace("nsim = 40", "nsim = 1"))
    rep = estimate_error_rates(cfg)
    assert rep.familywise["proportion"] in (0.0, 1.0)


def test_strong_alternative_power():
    cfg = SimConfig((10, 10, 10), (1, 2, 3), [[1, 0, 0], [0.5, 0.5, 0], [0, 0, 1]],
                    params={"nperm": 999}, nsim=20, seed=5)
    rep = estimate_error_rates(cfg)
    assert rep.familywise["proportion"] >= 0.9


def test_degenerate_replicates_excluded():
    cfg = SimConfig((3, 3), (0, 1), [[1, 0], [1, 0]], nsim=4)
    rep = estimate_error_rates(cfg)
    assert rep.degenerate == 4 and rep.n_valid == 0
