"""Estimators and hypothesis tests used by the experiments."""

from __future__ import annotations

from dataclasses import dataclass, asdict
import math

import numpy as np
from scipy import stats as _st

ALPHA = 0.01


def ks_test(samples, cdf):
    """One-sample Kolmogorov-Smirnov test with the asymptotic p-value.

    ``cdf`` is a callable or the name of a scipy.stats distribution.
    """
    x = np.asarray(samples, float).ravel()
    if len(x) < 30:
        raise ValueError("ks_test needs at least 30 samples")
    if np.any(~np.isfinite(x)):
        raise ValueError("samples must be finite")
    r = _st.kstest(x, cdf, method="asymp")
    return float(r.statistic), float(r.pvalue)


def two_sample_ks(a, b):
    a = np.asarray(a, float).ravel()
    b = np.asarray(b, float).ravel()
    if len(a) == 0 or len(b) == 0:
        raise ValueError("two_sample_ks needs nonempty samples")
    r = _st.ks_2samp(a, b, method="asymp")
    return float(r.statistic), float(r.pvalue)


def mean_se(x):
    """Sample mean and its standard error (pairwise summation via numpy)."""
    x = np.asarray(x, float).ravel()
    n = len(x)
    if n < 2:
        raise ValueError("need at least two samples")
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(n))


def var_se(x):
    """Sample variance and a delta-method standard error sqrt((m4 - s^4) / n)."""
    x = np.asarray(x, float).ravel()
    n = len(x)
    if n < 4:
        raise ValueError("need at least four samples")
    c = x - x.mean()
    s2 = float(c @ c / (n - 1))
    m4 = float(np.mean(c ** 4))
    return s2, math.sqrt(max(m4 - s2 * s2, 0.0) / n)


def zscore(est, ref, se):
    if se == 0:
        return 0.0 if est == ref else math.copysign(math.inf, est - ref)
    return (est - ref) / se


def nonincreasing(values, ses, k=2.0):
    """True if each |value| exceeds the previous one by at most k combined SEs."""
    v = np.abs(np.asarray(values, float))
    s = np.asarray(ses, float)
    return bool(all(v[i + 1] <= v[i] + k * math.hypot(s[i], s[i + 1])
                    for i in range(len(v) - 1)))


@dataclass
class Statistic:
    """One verdict: estimate against a reference under a stated null."""

    name: str
    criterion: str
    null: str
    n: int
    estimate: float
    reference: float | None = None
    stderr: float | None = None
    z: float | None = None
    p_value: float | None = None
    threshold: float | None = None
    kind: str = "z"        # z | p | bound | exact | info
    verdict: str = "INFO"

    def to_dict(self):
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, float) and not math.isfinite(v):
                d[k] = None if math.isnan(v) else ("inf" if v > 0 else "-inf")
        return d


def z_stat(name, criterion, samples_or_est, reference, k, null, se=None, n=None):
    """Verdict PASS when |estimate - reference| <= k standard errors."""
    if se is None:
        est, se = mean_se(samples_or_est)
        n = len(np.asarray(samples_or_est).ravel())
    else:
        est = float(samples_or_est)
    z = zscore(est, reference, se)
    return Statistic(name, criterion, null, int(n), est, float(reference), float(se), float(z),
                     threshold=float(k), kind="z", verdict="PASS" if abs(z) <= k else "FAIL")


def p_stat(name, criterion, statistic, p, n, null, alpha=ALPHA):
    return Statistic(name, criterion, null, int(n), float(statistic), p_value=float(p),
                     threshold=float(alpha), kind="p", verdict="PASS" if p > alpha else "FAIL")


def bound_stat(name, criterion, value, bound, null, n=1):
    """PASS when value <= bound."""
    return Statistic(name, criterion, null, int(n), float(value), reference=float(bound),
                     threshold=float(bound), kind="bound",
                     verdict="PASS" if value <= bound else "FAIL")


def exact_stat(name, criterion, error, tol, null, n=1):
    """PASS when an identity holds to within tol (error is the max deviation)."""
    return Statistic(name, criterion, null, int(n), float(error), reference=0.0,
                     threshold=float(tol), kind="exact",
                     verdict="PASS" if error <= tol else "FAIL")


def info_stat(name, value, note="", n=1, stderr=None):
    return Statistic(name, "", note, int(n), float(value), stderr=stderr, kind="info")


def bonferroni(stats_, alpha=ALPHA):
    """Family-wise view of the p-value tests: per-test level alpha / m."""
    ps = [s.p_value for s in stats_ if s.kind == "p"]
    m = len(ps)
    if m == 0:
        return {"m": 0, "alpha": alpha, "alpha_per_test": alpha, "verdict": "PASS"}
    lvl = alpha / m
    return {"m": m, "alpha": alpha, "alpha_per_test": lvl,
            "verdict": "PASS" if all(p > lvl for p in ps) else "FAIL"}
