"""Command line entry point ``cbf``."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import maps as M
from .experiments import EXPERIMENTS, ExperimentConfig, run_experiment
from .flows import EventFlow, Interval, sample_lattice_flow, sample_poisson_flow
from .metrics import dist_C_n, dist_D_n_upper, dist_D_upper
from .web import extract_web, write_paths_csv, truncation_slack


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


def _flow_from_spec(spec, base_dir="."):
    """A flow given as a file name, a serialised flow, or a sampling recipe.

    Sampling recipe: {"sample": {"r": 0.1, "embedding": "poisson",
    "horizon": [lo, hi], "seed": 0, "stream": 0}}.
    """
    if isinstance(spec, str):
        return EventFlow.load(os.path.join(base_dir, spec))
    if "sample" in spec:
        s = spec["sample"]
        prof = (M.make_profile(M.MonotoneMap.from_dict(s["map"])) if "map" in s
                else M.make_rmap(float(s.get("r", 0.1))))
        lo, hi = s.get("horizon", [-2.0, 2.0])
        H = Interval(float(lo), float(hi), True, True)
        fn = sample_poisson_flow if s.get("embedding", "poisson") == "poisson" \
            else sample_lattice_flow
        return fn(prof, H, int(s.get("seed", 0)), int(s.get("stream", 0)))
    return EventFlow.from_dict(spec)


def _grid_from_spec(g):
    if isinstance(g, dict):
        return np.linspace(float(g["lo"]), float(g["hi"]), int(g["num"]))
    return np.asarray(g, float)


def flow_distance(cfg, out_dir, base_dir="."):
    phi = _flow_from_spec(cfg["phi"], base_dir)
    psi = _flow_from_spec(cfg["psi"], base_dir)
    ns = cfg.get("n", [1])
    res = {"n": [], "n_max": int(cfg.get("n_max", max(ns)))}
    for n in ns:
        d_up, w = dist_D_n_upper(phi, psi, n, return_warp=True)
        res["n"].append({"n": n, "d_C": dist_C_n(phi, psi, n), "d_D_upper": d_up,
                         "warp": w.to_list() if w is not None else None})
    res["d_D_upper_total"] = dist_D_upper(phi, psi, res["n_max"])
    res["tail_bound"] = 2.0 ** -res["n_max"]
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "distances.json"), "w") as fh:
        json.dump(res, fh, indent=2)
    return res


def web_extract(cfg, out_dir, base_dir="."):
    flow = _flow_from_spec(cfg["flow"], base_dir)
    E = [tuple(e) for e in cfg["E"]]
    grid = _grid_from_spec(cfg["grid"])
    paths = extract_web(flow, E, grid, cfg.get("side", "right"))
    os.makedirs(out_dir, exist_ok=True)
    write_paths_csv(os.path.join(out_dir, "paths.csv"), paths)
    n = float(np.max(np.abs(grid)))
    return {"paths": len(paths), "truncation_slack": truncation_slack(n)}


def _parser():
    p = argparse.ArgumentParser(prog="cbf", description="Disturbance flows and coalescing "
                                "Brownian motion experiments.")
    p.add_argument("command", choices=EXPERIMENTS + ("flow-distance", "web-extract"))
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--runs", type=int, help="override n_runs")
    p.add_argument("--no-rerun", action="store_true", help="disable the fresh-seed rerun")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        raw = _read_json(args.config) if args.config else {}
    except (OSError, json.JSONDecodeError) as e:
        print(f"cbf: error: cannot read config: {e}", file=sys.stderr)
        return 2
    base = os.path.dirname(os.path.abspath(args.config)) if args.config else "."
    out = args.out or raw.get("out") or os.path.join("results", args.command)
    try:
        if args.command == "flow-distance":
            res = flow_distance(raw, out, base)
            print(json.dumps(res["n"], indent=1))
            return 0
        if args.command == "web-extract":
            print(json.dumps(web_extract(raw, out, base)))
            return 0
        raw = dict(raw)
        raw.setdefault("experiment", args.command)
        if raw["experiment"] != args.command:
            raise ValueError(f"config is for {raw['experiment']!r}, not {args.command!r}")
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.runs is not None:
            raw["n_runs"] = args.runs
        if args.no_rerun:
            raw["rerun"] = False
        raw["out"] = out
        cfg = ExperimentConfig.from_dict(raw)
    except (ValueError, KeyError, OSError) as e:
        print(f"cbf: error: {e}", file=sys.stderr)
        return 2
    rep = run_experiment(cfg)
    for s in rep.statistics:
        if s.kind != "info":
            print(f"{s.verdict:4s} [{s.criterion}] {s.name}: {s.estimate:.6g}")
    if rep.rerun is not None:
        print(f"first attempt FAIL; rerun with seed {rep.rerun.seed}: {rep.rerun.verdict}")
    print(f"{rep.verdict} {cfg.experiment} ({rep.wall_clock_s:.1f} s) -> {out}")
    return 0 if rep.verdict == "PASS" else 1


if __name__ == "__main__":
    sys.exit(main())
