import math

import numpy as np
import pytest
from scipy import stats as st

from cbflow.stats import (bonferroni, bound_stat, exact_stat, info_stat, ks_test, mean_se,
                          nonincreasing, p_stat, two_sample_ks, var_se, z_stat, zscore)


def test_ks_on_matching_distribution():
    x = np.random.default_rng(0).standard_normal(5000)
    D, p = ks_test(x, "norm")
    assert D < 0.03 and p > 0.01


def test_ks_constant_samples():
    D, p = ks_test(np.zeros(100), "norm")
    assert D >= 0.5 and p < 1e-10


def test_ks_requires_samples():
    with pytest.raises(ValueError):
        ks_test(np.zeros(10), "norm")
    with pytest.raises(ValueError):
        ks_test(np.r_[np.zeros(40), np.nan], "norm")


def test_two_sample_extremes():
    a = np.arange(50.0)
    assert two_sample_ks(a, a)[0] == 0.0
    assert two_sample_ks(a, a + 100)[0] == 1.0
    with pytest.raises(ValueError):
        two_sample_ks([], a)


def test_ks_calibration():
    rng = np.random.default_rng(1)
    rej = np.mean([ks_test(rng.random(200), st.uniform.cdf)[1] < 0.05 for _ in range(100)])
    assert 0.01 <= rej <= 0.12


def test_mean_and_variance_se():
    x = np.random.default_rng(2).standard_normal(20000)
    m, se = mean_se(x)
    assert se == pytest.approx(1 / math.sqrt(len(x)), rel=0.05)
    assert abs(m) < 4 * se
    v, vse = var_se(x)
    # normal: var of s^2 is 2 sigma^4 / n
    assert vse == pytest.approx(math.sqrt(2 / len(x)), rel=0.1)
    assert abs(v - 1) < 4 * vse


def test_zscore_and_monotonicity():
    assert zscore(1.0, 0.5, 0.25) == 2.0
    assert zscore(1.0, 1.0, 0.0) == 0.0
    assert zscore(2.0, 1.0, 0.0) == math.inf
    assert nonincreasing([3.0, 2.0, 1.0], [0.1] * 3)
    assert nonincreasing([1.0, 1.1], [0.1, 0.1])
    assert not nonincreasing([1.0, 2.0], [0.1, 0.1])


def test_statistic_verdicts():
    s = z_stat("m", "3", 0.1, 0.0, 4, "mean zero", se=0.05, n=10)
    assert s.verdict == "PASS" and s.z == pytest.approx(2.0)
    assert z_stat("m", "3", 0.3, 0.0, 4, "", se=0.05, n=10).verdict == "FAIL"
    assert p_stat("k", "3", 0.02, 0.2, 100, "").verdict == "PASS"
    assert p_stat("k", "3", 0.02, 0.005, 100, "").verdict == "FAIL"
    assert bound_stat("b", "7", 0.1, 0.2, "").verdict == "PASS"
    assert exact_stat("e", "1", 1e-8, 1e-9, "").verdict == "FAIL"
    i = info_stat("i", math.inf)
    assert i.verdict == "INFO" and i.to_dict()["estimate"] == "inf"


def test_bonferroni():
    ps = [p_stat(f"k{i}", "6", 0.0, p, 10, "") for i, p in enumerate([0.5, 0.004])]
    b = bonferroni(ps)
    assert b["m"] == 2 and b["alpha_per_test"] == 0.005 and b["verdict"] == "FAIL"
    assert bonferroni([])["verdict"] == "PASS"
