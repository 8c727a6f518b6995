"""End-to-end experiments with seeded reproducibility and CSV/JSON reports."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict, fields
import csv
import json
import math
import os
import time

import numpy as np
from scipy import stats as _st

from . import maps as M
from . import selftest
from .coalescing import (bes3_passage_time, complete_coalescence_time, laplace_reference,
                         ring_run, sample_coalescing)
from .flows import (Interval, rescale, reverse, sample_lattice_flow,
                    sample_poisson_flow, trajectories)
from ._kernels import pair_compensator
from .stats import (ALPHA, Statistic, bonferroni, info_stat, mean_se, nonincreasing,
                    p_stat, two_sample_ks, var_se, ks_test, z_stat)

EXPERIMENTS = ("flow-convergence", "pair-covariance", "coalescence-time", "time-reversal",
               "metric-selftest", "web-distance")

# substream offsets keep the sample families of one experiment independent
_S_INV = 1_000_000
_S_BES = 2_000_000
_S_FWD = 3_000_000


@dataclass
class ExperimentConfig:
    """Parameters of one experiment; unknown JSON keys are rejected."""

    experiment: str
    r: float = 0.05
    map: dict | None = None
    r_ladder: list | None = None
    embedding: str = "poisson"
    eps: float = 1.0
    n_runs: int = 10_000
    dt: float | None = None
    seed: int = 20240601
    horizon: float = 1.0
    N: int = 64
    times: list = field(default_factory=lambda: [0.25, 0.5, 1.0])
    starts: list = field(default_factory=lambda: [[0.0, 0.0], [0.0, 0.3]])
    lambdas: list = field(default_factory=lambda: [-1.0, 1.0, math.pi ** 2 / 4])
    martingale_times: list = field(default_factory=lambda: [0.02, 0.05, 0.1])
    bridge_correction: bool = True
    b_grid: int = 1 << 14
    n_pairs: int = 20
    alpha: float = ALPHA
    rerun: bool = True
    out: str = "results"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; "
                             f"choose from {', '.join(EXPERIMENTS)}")
        if int(self.n_runs) < 1:
            raise ValueError("n_runs must be at least 1")
        self.n_runs = int(self.n_runs)
        if int(self.seed) < 0 or int(self.seed) != self.seed:
            raise ValueError("seed must be a nonnegative integer")
        self.seed = int(self.seed)
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.embedding not in ("lattice", "poisson"):
            raise ValueError("embedding must be 'lattice' or 'poisson'")
        if not 0 < self.eps <= 1:
            raise ValueError("eps must lie in (0, 1]")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if any(t <= 0 or t > self.horizon for t in self.times):
            raise ValueError("record times must lie in (0, horizon]")

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        bad = set(d) - names
        if bad:
            raise ValueError(f"unknown config keys: {sorted(bad)}")
        return cls(**d)

    @classmethod
    def load(cls, path, **overrides):
        with open(path) as fh:
            d = json.load(fh)
        d.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(d)

    def to_dict(self):
        return asdict(self)

    def ladder(self):
        return list(self.r_ladder) if self.r_ladder else [self.r]

    def profile(self, r=None):
        if self.map is not None and r is None:
            return M.make_profile(M.MonotoneMap.from_dict(self.map))
        return M.make_rmap(self.r if r is None else r)


@dataclass
class ExperimentReport:
    experiment: str
    config: dict
    seed: int
    statistics: list
    wall_clock_s: float
    summary: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict, repr=False)
    rerun: "ExperimentReport | None" = None

    @property
    def first_verdict(self):
        return "PASS" if all(s.verdict != "FAIL" for s in self.statistics) else "FAIL"

    @property
    def verdict(self):
        """Final verdict; a fresh-seed rerun replaces the first attempt's."""
        return self.rerun.verdict if self.rerun is not None else self.first_verdict

    def criteria(self):
        out = {}
        for s in self.statistics:
            if s.criterion:
                prev = out.get(s.criterion, "PASS")
                out[s.criterion] = "FAIL" if "FAIL" in (prev, s.verdict) else "PASS"
        return out

    def to_dict(self):
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "verdict": self.verdict,
            "first_attempt_verdict": self.first_verdict,
            "criteria": self.criteria(),
            "bonferroni": bonferroni(self.statistics, self.config.get("alpha", ALPHA)),
            "statistics": [s.to_dict() for s in self.statistics],
            "summary": self.summary,
            "wall_clock_s": self.wall_clock_s,
            "config": self.config,
            "rerun": self.rerun.to_dict() if self.rerun is not None else None,
        }

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.json"), "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, default=_json_default)
        _write_csv(os.path.join(out_dir, "statistics.csv"),
                   list(Statistic.__dataclass_fields__),
                   [list(s.to_dict().values()) for s in self.statistics])
        for name, (header, rows) in self.tables.items():
            _write_csv(os.path.join(out_dir, name), header, rows)
        if self.rerun is not None:
            self.rerun.write(os.path.join(out_dir, "rerun"))


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _sampler(embedding):
    return sample_poisson_flow if embedding == "poisson" else sample_lattice_flow


# ----------------------------------------------------------------------
# flow-convergence
# ----------------------------------------------------------------------

def one_point_samples(profile, n_runs, t, seed, embedding="poisson", eps=1.0, stream0=0):
    """X_t from (0, 0) under n_runs independent flows, optionally rescaled by eps."""
    sample = _sampler(embedding)
    H = Interval(0.0, t * eps ** 2)
    out = np.empty(n_runs)
    for i in range(n_runs):
        fl = sample(profile, H, seed, stream0 + i)
        if eps != 1.0:
            fl = rescale(fl, eps)
        v, _ = trajectories(fl, [(0.0, 0.0)], [t])
        out[i] = v[0, 0]
    return out


def _flow_convergence(cfg: ExperimentConfig, seed):
    t = float(cfg.horizon)
    stats, rows, ks_by_rung = [], [], []
    ladder = cfg.ladder() if cfg.map is None else [None]
    for k, r in enumerate(ladder):
        prof = cfg.profile(r)
        x = one_point_samples(prof, cfg.n_runs, t, seed, cfg.embedding, cfg.eps)
        tag = f"r={r}" if r is not None else "map"
        crit = "3" if k == len(ladder) - 1 else ""
        D, p = ks_test(x, _st.norm(0, math.sqrt(t)).cdf)
        ks_by_rung.append(D)
        s_ks = p_stat(f"ks_normal[{tag}]", crit, D, p, len(x), f"X_{t} ~ Normal(0, {t})",
                      cfg.alpha)
        s_m = z_stat(f"mean[{tag}]", crit, x, 0.0, 4.0, "E X_t = 0")
        v, vse = var_se(x)
        s_v = z_stat(f"variance[{tag}]", crit, v, t, 4.0, f"Var X_t = {t}", se=vse, n=len(x))
        for s in (s_ks, s_m, s_v):
            if not crit:
                s.verdict = "INFO"
            stats.append(s)
        stats.append(info_stat(f"rho[{tag}]", prof.rho))
        stats.append(info_stat(f"lambda[{tag}]", prof.lambda_1))
        rows += [[r, i, t, xi] for i, xi in enumerate(x)]
    if len(ladder) > 1:
        stats.append(info_stat("ks_statistic_nonincreasing",
                               float(all(b <= a for a, b in zip(ks_by_rung, ks_by_rung[1:]))),
                               "1 if the KS statistic decreases along the ladder"))
    return stats, {"samples.csv": (["r", "run", "t", "x"], rows)}, {}


# ----------------------------------------------------------------------
# pair-covariance
# ----------------------------------------------------------------------

def pair_samples(profile, n_runs, x1, x2, times, seed, embedding="poisson", b_grid=1 << 14):
    """Products X1 X2, compensators int_0^{t ^ T} b ds and collision times T."""
    f = profile.map
    bgrid = np.linspace(0.0, 1.0, b_grid + 1)
    bvals = M.kernel_b(f, bgrid)
    xs, ym, yp = f._extended()
    rec = np.asarray(times, float)
    H = Interval(0.0, float(rec.max()))
    sample = _sampler(embedding)
    prod = np.empty((n_runs, len(rec)))
    comp = np.empty((n_runs, len(rec)))
    T = np.empty(n_runs)
    for i in range(n_runs):
        fl = sample(profile, H, seed, i)
        c, p_, T[i] = pair_compensator(fl.times, fl.angles, xs, ym, yp, 1.0, float(x1),
                                       float(x2), 0.0, rec, bgrid, bvals)
        comp[i] = c
        prod[i] = p_
    return prod, comp, T


def _pair_covariance(cfg: ExperimentConfig, seed):
    (s1, x1), (s2, x2) = cfg.starts
    if s1 != 0 or s2 != 0:
        raise ValueError("pair-covariance uses two starts at time 0")
    times = sorted(float(t) for t in cfg.times)
    ladder = cfg.ladder() if cfg.map is None else [None]
    stats, rows = [], []
    devs = {t: [] for t in times}
    for r in ladder:
        prof = cfg.profile(r)
        prod, comp, T = pair_samples(prof, cfg.n_runs, x1, x2, times, seed, cfg.embedding,
                                     cfg.b_grid)
        tag = f"r={r}" if r is not None else "map"
        for j, t in enumerate(times):
            over = np.maximum(t - T, 0.0)
            raw = prod[:, j] - x1 * x2 - over
            stats.append(z_stat(f"raw_covariance[{tag},t={t}]", "4", raw, 0.0, 4.0,
                                "E[Z1 Z2 - (t - T)+] = x1 x2"))
            d, dse = mean_se(comp[:, j])
            devs[t].append((d, dse))
            stats.append(info_stat(f"deviation[{tag},t={t}]", d,
                                   "E int_0^(t^T) b(X1 - X2) ds", len(T), dse))
            mres = raw - comp[:, j]
            m, mse = mean_se(mres)
            stats.append(info_stat(f"martingale_residual[{tag},t={t}]", m,
                                   "Z1 Z2 - compensator has mean x1 x2", len(T), mse))
        stats.append(info_stat(f"P(T<={times[-1]})[{tag}]", float(np.mean(T <= times[-1]))))
        rows += [[r, i, t, prod[i, j], T[i], comp[i, j]]
                 for i in range(len(T)) for j, t in enumerate(times)]
    if len(ladder) > 1:
        for t in times:
            v = [d for d, _ in devs[t]]
            se = [s for _, s in devs[t]]
            ok = nonincreasing(v, se)
            stats.append(Statistic(f"deviation_nonincreasing[t={t}]", "4",
                                   "|deviation| non-increasing along the ladder (2 SE slack)",
                                   len(v), float(ok), kind="exact",
                                   verdict="PASS" if ok else "FAIL"))
    table = {"pairs.csv": (["r", "run", "t", "prod", "T", "compensator"], rows)}
    return stats, table, {}


# ----------------------------------------------------------------------
# coalescence-time
# ----------------------------------------------------------------------

def coalescence_samples(N, dt, n_runs, seed, bridge=True, lam=1.0, mart_times=()):
    T = np.empty(n_runs)
    Mt = np.empty((n_runs, len(mart_times)))
    for i in range(n_runs):
        t, m, _ = ring_run(N, dt, seed, i, horizon=2.0, bridge_correction=bridge, lam=lam,
                           record_times=mart_times)
        if not math.isfinite(t):
            t = complete_coalescence_time(N, dt, seed, i, bridge, horizon=4.0)
        T[i] = t
        Mt[i] = m
    return T, Mt


def bes3_samples(dt, n_runs, seed, bridge=True):
    return np.array([bes3_passage_time(dt, seed, _S_BES + i, bridge) for i in range(n_runs)])


def _coalescence_time(cfg: ExperimentConfig, seed):
    dt = cfg.dt if cfg.dt is not None else 1e-5
    N, n = int(cfg.N), cfg.n_runs
    lam_m = 1.0
    mt = sorted(float(t) for t in cfg.martingale_times)
    T, Mt = coalescence_samples(N, dt, n, seed, cfg.bridge_correction, lam_m, mt)
    stats = [z_stat("mean_T", "5", T, 1.0 / 6.0, 3.0, "E T = 1/6")]
    lap = []
    for lam in cfg.lambdas:
        ref = laplace_reference(float(lam))
        s = z_stat(f"laplace[lambda={lam:.6g}]", "5", np.exp(lam * T), ref, 3.0,
                   "E exp(lambda T) = sqrt(lambda) / sin(sqrt(lambda))")
        stats.append(s)
        lap.append({"lambda": float(lam), "estimate": s.estimate, "se": s.stderr,
                    "reference": ref})
    b = bes3_samples(dt, n, seed, cfg.bridge_correction) / 2.0
    D, p = two_sample_ks(T, b)
    stats.append(p_stat("ks_vs_bes3_half", "5", D, p, n, "T ~ BES(3) passage time / 2",
                        cfg.alpha))
    m0 = N * math.sin(math.sqrt(lam_m) / N)
    for j, t in enumerate(mt):
        m, se = mean_se(Mt[:, j])
        stats.append(info_stat(f"sine_martingale[t={t}]", m - m0,
                               f"E M_t - M_0 = 0 (lambda = {lam_m})", n, se))
    mean_T, se_T = mean_se(T)
    summary = {"N": N, "dt": dt, "n_runs": n, "mean_T": mean_T, "se_T": se_T,
               "laplace": lap}
    tables = {"coalescence.csv": (["run", "T", "bes3_half"],
                                  [[i, T[i], b[i]] for i in range(n)]),
              "martingale.csv": (["run", "t", "M"],
                                 [[i, t, Mt[i, j]] for i in range(n) for j, t in enumerate(mt)])}
    return stats, tables, summary


# ----------------------------------------------------------------------
# time-reversal
# ----------------------------------------------------------------------

def reversal_functionals(profile, n_runs, seed, embedding, x2=0.3, t=1.0, reversed_=True,
                         stream0=0):
    """(Z_t from (0,0), T between (0,0) and (0,x2) censored at t) per run.

    With ``reversed_`` the flow is sampled on [-t, 0) and time-reversed.
    """
    sample = _sampler(embedding)
    H = Interval(-t, 0.0, True, False) if reversed_ else Interval(0.0, t)
    Z = np.empty(n_runs)
    T = np.empty(n_runs)
    for i in range(n_runs):
        fl = sample(profile, H, seed, stream0 + i)
        if reversed_:
            fl = reverse(fl)
        v, c = trajectories(fl, [(0.0, 0.0), (0.0, x2)], [t])
        Z[i] = v[0, 0]
        T[i] = min(c[0, 1], t)
    return Z, T


def inverse_at_zero(final, N):
    """Midpoint estimate of inf{x : phi(x) > 0} from the images of k / N."""
    final = np.asarray(final, float)
    k = np.arange(N)
    m = np.floor(-final) + 1.0
    j = k + m * N
    return float(j.min() / N - 0.5 / N)


def coalescing_reversal_samples(N, dt, n_runs, seed, t=1.0, bridge=True):
    fwd = np.empty(n_runs)
    bwd = np.empty(n_runs)
    for i in range(n_runs):
        ts = sample_coalescing([(0.0, 0.0)], "circle", dt, t, seed, bridge, _S_FWD + i,
                               record_times=[t])
        fwd[i] = ts.paths[0, -1]
        _, _, final = ring_run(N, dt, seed, i, horizon=t, bridge_correction=bridge,
                               run_to_horizon=True)
        bwd[i] = inverse_at_zero(final, N)
    return fwd, bwd


def _time_reversal(cfg: ExperimentConfig, seed):
    prof = cfg.profile()
    prof_inv = M.make_profile(M.invert(prof.map), prof.rho)
    x2 = float(cfg.starts[1][1])
    t = float(cfg.horizon)
    n = cfg.n_runs
    Zr, Tr = reversal_functionals(prof, n, seed, cfg.embedding, x2, t, True)
    Zf, Tf = reversal_functionals(prof_inv, n, seed, cfg.embedding, x2, t, False, _S_INV)
    stats = []
    D, p = two_sample_ks(Zr, Zf)
    stats.append(p_stat("ks_Z1_reversed_vs_inverse", "6", D, p, n,
                        "Z_1 under reversed flow ~ Z_1 under inverse-map flow", cfg.alpha))
    D, p = two_sample_ks(Tr, Tf)
    stats.append(p_stat("ks_T_reversed_vs_inverse", "6", D, p, n,
                        f"censored T(0,{x2}) under reversed flow ~ under inverse-map flow",
                        cfg.alpha))
    dt = cfg.dt if cfg.dt is not None else 1e-4
    fwd, bwd = coalescing_reversal_samples(int(cfg.N), dt, n, seed, t, cfg.bridge_correction)
    D, p = two_sample_ks(fwd, bwd)
    stats.append(p_stat("ks_coalescing_forward_vs_reversed", "6", D, p, n,
                        "forward one-point marginal ~ time-reversed one-point marginal",
                        cfg.alpha))
    stats.append(info_stat("P(T<t)_reversed", float(np.mean(Tr < t)), n=n))
    stats.append(info_stat("P(T<t)_inverse", float(np.mean(Tf < t)), n=n))
    tables = {"reversal.csv": (["side", "run", "z", "T_censored"],
                               [["reversed", i, Zr[i], Tr[i]] for i in range(n)]
                               + [["inverse", i, Zf[i], Tf[i]] for i in range(n)]),
              "coalescing_reversal.csv": (["run", "forward", "reversed"],
                                          [[i, fwd[i], bwd[i]] for i in range(n)])}
    return stats, tables, {}


# ----------------------------------------------------------------------
# deterministic suites
# ----------------------------------------------------------------------

def _metric_selftest(cfg: ExperimentConfig, seed):
    stats = selftest.algebra_suite(seed=seed) + selftest.flow_suite(seed=seed + 1) \
        + selftest.metric_suite(seed=seed + 2)
    return stats, {}, {}


def _web_distance(cfg: ExperimentConfig, seed):
    return selftest.web_suite(seed=seed, n_pairs=cfg.n_pairs), {}, {}


_RUNNERS = {
    "flow-convergence": (_flow_convergence, True),
    "pair-covariance": (_pair_covariance, True),
    "coalescence-time": (_coalescence_time, True),
    "time-reversal": (_time_reversal, True),
    "metric-selftest": (_metric_selftest, False),
    "web-distance": (_web_distance, False),
}


def _run_once(cfg, seed):
    fn, _ = _RUNNERS[cfg.experiment]
    t0 = time.perf_counter()
    stats, tables, summary = fn(cfg, seed)
    return ExperimentReport(cfg.experiment, cfg.to_dict(), seed, stats,
                            time.perf_counter() - t0, summary, tables)


def run_experiment(cfg: ExperimentConfig | dict, write=True) -> ExperimentReport:
    """Run one experiment; a failed statistical run is repeated once with a fresh seed."""
    if isinstance(cfg, dict):
        cfg = ExperimentConfig.from_dict(cfg)
    rep = _run_once(cfg, cfg.seed)
    _, stochastic = _RUNNERS[cfg.experiment]
    if rep.first_verdict == "FAIL" and cfg.rerun and stochastic:
        rep.rerun = _run_once(cfg, cfg.seed + 1)
    if write:
        rep.write(cfg.out)
    return rep
