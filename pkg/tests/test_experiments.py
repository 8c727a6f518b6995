import csv
import json

import numpy as np
import pytest

from cbflow import maps as M
from cbflow.cli import main
from cbflow.experiments import (ExperimentConfig, coalescence_samples, inverse_at_zero,
                                one_point_samples, run_experiment)


def small(experiment, tmp_path, **kw):
    d = {"experiment": experiment, "n_runs": 200, "seed": 7, "rerun": False,
         "out": str(tmp_path / experiment)}
    d.update(kw)
    return ExperimentConfig.from_dict(d)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"experiment": "nope"})
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"experiment": "flow-convergence", "colour": 1})
    for bad in ({"n_runs": 0}, {"eps": 1.5}, {"embedding": "grid"}, {"dt": -1.0},
                {"seed": -3}, {"times": [2.0]}):
        with pytest.raises(ValueError):
            ExperimentConfig.from_dict({"experiment": "coalescence-time", **bad})
    c = ExperimentConfig.from_dict({"experiment": "pair-covariance", "r_ladder": [0.2, 0.1]})
    assert c.ladder() == [0.2, 0.1]


def test_one_point_samples_reproducible():
    prof = M.make_rmap(0.2)
    a = one_point_samples(prof, 50, 1.0, 3)
    b = one_point_samples(prof, 50, 1.0, 3)
    assert np.array_equal(a, b) and a.shape == (50,)


def test_inverse_at_zero_identity():
    # equally spaced labels that have not moved: the inverse at 0 is label 0
    assert abs(inverse_at_zero(np.arange(8) / 8, 8)) < 1 / 8 + 1e-12


def test_coalescence_samples_shapes():
    T, Mt = coalescence_samples(8, 1e-3, 20, 1, mart_times=(0.01, 0.02))[:2]
    assert len(T) == 20 and np.all(T > 0)


@pytest.mark.parametrize("exp, extra, csvs", [
    ("flow-convergence", {"r": 0.2}, ["samples.csv"]),
    ("pair-covariance", {"r_ladder": [0.2, 0.1], "b_grid": 1024}, ["pairs.csv"]),
    ("coalescence-time", {"N": 8, "dt": 1e-3}, ["coalescence.csv", "martingale.csv"]),
    ("time-reversal", {"r": 0.2, "N": 8, "dt": 1e-3},
     ["reversal.csv", "coalescing_reversal.csv"]),
])
def test_small_runs_write_outputs(tmp_path, exp, extra, csvs):
    cfg = small(exp, tmp_path, **extra)
    rep = run_experiment(cfg)
    out = tmp_path / exp
    data = json.loads((out / "report.json").read_text())
    assert data["experiment"] == exp and data["verdict"] in ("PASS", "FAIL")
    assert data["statistics"] and set(data["criteria"]) <= set("12345678")
    for name in csvs + ["statistics.csv"]:
        with open(out / name) as fh:
            rows = list(csv.reader(fh))
        assert len(rows) > 1
    again = run_experiment(cfg, write=False)
    assert [s.estimate for s in again.statistics] == [s.estimate for s in rep.statistics]


def test_rerun_only_on_failure(tmp_path):
    cfg = small("flow-convergence", tmp_path, r=0.2, rerun=True)
    rep = run_experiment(cfg, write=False)
    assert (rep.rerun is None) == (rep.first_verdict == "PASS")


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["coalescence-time", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"experiment": "coalescence-time", "colour": 1}))
    assert main(["coalescence-time", "--config", str(bad)]) == 2
    wrong = tmp_path / "wrong.json"
    wrong.write_text(json.dumps({"experiment": "time-reversal"}))
    assert main(["coalescence-time", "--config", str(wrong)]) == 2
    with pytest.raises(SystemExit):
        main(["no-such-experiment"])
    cfg = tmp_path / "ok.json"
    cfg.write_text(json.dumps({"N": 8, "dt": 1e-3}))
    out = tmp_path / "res"
    code = main(["coalescence-time", "--config", str(cfg), "--runs", "300", "--seed", "3",
                 "--out", str(out), "--no-rerun"])
    rep = json.loads((out / "report.json").read_text())
    assert code == (0 if rep["verdict"] == "PASS" else 1)
    assert rep["config"]["n_runs"] == 300 and rep["seed"] == 3


def test_cli_flow_distance_and_web(tmp_path):
    fd = tmp_path / "fd.json"
    fd.write_text(json.dumps({
        "phi": {"sample": {"r": 0.5, "horizon": [-2, 2], "seed": 1}},
        "psi": {"sample": {"r": 0.5, "horizon": [-2, 2], "seed": 1}},
        "n": [1], "n_max": 1}))
    assert main(["flow-distance", "--config", str(fd), "--out", str(tmp_path / "d")]) == 0
    res = json.loads((tmp_path / "d" / "distances.json").read_text())
    assert res["n"][0]["d_C"] == 0.0 and res["n"][0]["d_D_upper"] == 0.0
    we = tmp_path / "we.json"
    we.write_text(json.dumps({
        "flow": {"sample": {"r": 0.3, "horizon": [-1, 1], "seed": 2}},
        "E": [[0.0, 0.2], [0.0, 0.6]], "grid": {"lo": -0.9, "hi": 0.9, "num": 19}}))
    assert main(["web-extract", "--config", str(we), "--out", str(tmp_path / "w")]) == 0
    rows = (tmp_path / "w" / "paths.csv").read_text().splitlines()
    assert len(rows) == 1 + 2 * 19
