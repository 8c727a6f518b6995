"""Acceptance criteria 1-8 at full scale.

Each criterion prints one line ``PASS criterion k`` or ``FAIL criterion k``
followed by its statistics; the lines are repeated in
the pytest terminal summary.  Runs use 10^4 samples, the default
seed and no rerun, so a pass here is a first-attempt pass.
"""

import pytest

from cbflow import selftest
from cbflow.experiments import ExperimentConfig, run_experiment

N_RUNS = 10_000


def _report(log, k, stats):
    bad = [s for s in stats if s.verdict == "FAIL"]
    line = f"{'FAIL' if bad else 'PASS'} criterion {k}"
    log.append(line)
    print("\n" + line)
    for s in stats:
        if s.kind != "info":
            print(f"    {s.verdict:4s} {s.name}: {s.estimate:.6g}")
    return not bad


def _run(exp, tmp_path, **kw):
    d = {"experiment": exp, "n_runs": N_RUNS, "rerun": False, "out": str(tmp_path / exp)}
    d.update(kw)
    return run_experiment(ExperimentConfig.from_dict(d)).statistics


def _only(stats, k):
    return [s for s in stats if s.criterion == k]


@pytest.mark.acceptance
def test_criterion_1_map_algebra(acceptance_log):
    assert _report(acceptance_log, 1, selftest.algebra_suite(n_maps=200))


@pytest.mark.acceptance
def test_criterion_2_flow_algebra(acceptance_log):
    assert _report(acceptance_log, 2, selftest.flow_suite())


@pytest.mark.acceptance
def test_criterion_3_one_point_motion(tmp_path, acceptance_log):
    assert _report(acceptance_log, 3, _only(_run("flow-convergence", tmp_path, r=0.05), "3"))


@pytest.mark.acceptance
def test_criterion_4_pair_covariance(tmp_path, acceptance_log):
    stats = _run("pair-covariance", tmp_path, r_ladder=[0.2, 0.1, 0.05])
    assert _report(acceptance_log, 4, _only(stats, "4"))


@pytest.mark.acceptance
def test_criterion_5_coalescence_time(tmp_path, acceptance_log):
    assert _report(acceptance_log, 5, _only(_run("coalescence-time", tmp_path), "5"))


@pytest.mark.acceptance
def test_criterion_6_time_reversal(tmp_path, acceptance_log):
    assert _report(acceptance_log, 6, _only(_run("time-reversal", tmp_path), "6"))


@pytest.mark.acceptance
def test_criterion_7_flow_metrics(acceptance_log):
    assert _report(acceptance_log, 7, selftest.metric_suite())


@pytest.mark.acceptance
def test_criterion_8_web_continuity(acceptance_log):
    assert _report(acceptance_log, 8, selftest.web_suite(n_pairs=20))
