"""Command-line interface.

Subcommands: simulate (sample a model spec to CSV), estimate (fit on a
sample CSV, emit the model), ipm (distance between two sample CSVs),
twosample (test report), rates (sweep + slopes + SVG), hardinstance
(emit instance + sampler output). Exit codes: 0 success, 2 configuration
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import harness, serialize
from .errors import ConfigError, NumericalError
from .fitmodel import fit_model
from .hardness import hard_instance
from .ipm import DiscreteMeasure, budget_for, d_gamma
from .surrogate import SurrogateConfig, build_surrogate
from .twosample import TestConfig, run_test


def _load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _out_path(args, name: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    truth = harness.truth_from_spec(cfg["model"])
    sampler, _m, _d, _D = harness._truth_parts(truth)
    X = sampler(int(cfg.get("n", 1024)), args.seed)
    path = serialize.points_to_csv(X, _out_path(args, "sample.csv"))
    print(path)
    return 0


def cmd_estimate(args) -> int:
    cfg = _load_config(args.config)
    X, _w = serialize.points_from_csv(cfg["sample"])
    scfg = SurrogateConfig(seed=args.seed, **cfg["estimator"])
    budget = budget_for(len(X), scfg.D, scfg.gamma,
                        box=(np.full(scfg.D, -2.5), np.full(scfg.D, 2.5)),
                        J_dict=cfg.get("J_dict"))
    surr = build_surrogate(X, scfg)
    model = fit_model(surr, budget, seed=args.seed, sweeps=int(cfg.get("sweeps", 10)))
    path = serialize.dump(serialize.fitted_model_to_dict(model),
                          _out_path(args, "model.json"))
    print(path)
    return 0


def cmd_ipm(args) -> int:
    cfg = _load_config(args.config)
    A, wa = serialize.points_from_csv(cfg["sample_a"])
    B, wb = serialize.points_from_csv(cfg["sample_b"])
    D = A.shape[1]
    budget = budget_for(max(len(A), len(B)), D, float(cfg.get("gamma", 1.0)),
                        box=(np.full(D, cfg.get("box_lo", -2.5)),
                             np.full(D, cfg.get("box_hi", 2.5))),
                        J_dict=cfg.get("J_dict"))
    val = d_gamma(DiscreteMeasure(A, wa), DiscreteMeasure(B, wb), budget)
    report = {"d_gamma": val, "gamma": budget.gamma, "kappa": budget.kappa,
              "J_dict": budget.J_dict, "family": budget.family.name}
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_twosample(args) -> int:
    cfg = _load_config(args.config)
    X, _ = serialize.points_from_csv(cfg["sample_a"])
    Y, _ = serialize.points_from_csv(cfg["sample_b"])
    scfg = SurrogateConfig(seed=args.seed, **cfg["estimator"])
    budget = budget_for(len(X), scfg.D, scfg.gamma,
                        box=(np.full(scfg.D, -2.5), np.full(scfg.D, 2.5)),
                        J_dict=cfg.get("J_dict"))
    tcfg = TestConfig(surrogate=scfg, budget=budget,
                      c=cfg.get("c"), permutations=cfg.get("permutations", 199 if cfg.get("c") is None else None),
                      level=float(cfg.get("level", 0.05)))
    report = run_test(X, Y, tcfg, seed=args.seed)
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_rates(args) -> int:
    cfg = harness.ExperimentConfig(**_load_config(args.config))
    if args.seed is not None:
        cfg.master_seed = args.seed
    rows = harness.run(cfg)
    csv_path = harness.emit(rows, "csv", _out_path(args, f"{cfg.experiment_id}.csv"))
    print(csv_path)
    if args.format == "svg":
        svg_path = harness.emit(rows, "svg", _out_path(args, f"{cfg.experiment_id}.svg"))
        print(svg_path)
    for method in cfg.methods:
        try:
            b, se = harness.slope(rows, method)
            b2, _ = harness.slope(rows, method, abscissa="n_over_log")
            print(json.dumps({"method": method, "slope": b, "se": se,
                              "slope_vs_n_over_log": b2}, sort_keys=True))
        except NumericalError:
            pass
    return 0


def cmd_hardinstance(args) -> int:
    cfg = _load_config(args.config)
    params = {k: v for k, v in cfg.items() if k not in ("family", "n_sample")}
    if "code" in params:
        params["code"] = np.asarray(params["code"], dtype=np.int8)
    inst = hard_instance(cfg["family"], **params)
    path = serialize.dump(serialize.hard_instance_to_dict(inst),
                          _out_path(args, "instance.json"))
    n_sample = int(cfg.get("n_sample", 0))
    print(path)
    if n_sample:
        spath = serialize.points_to_csv(inst.mixture.sample(n_sample, args.seed),
                                        _out_path(args, "instance_sample.csv"))
        print(spath)
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "ipm": cmd_ipm,
    "twosample": cmd_twosample,
    "rates": cmd_rates,
    "hardinstance": cmd_hardinstance,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="manidest")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default=".")
    parser.add_argument("--format", choices=["csv", "svg"], default="csv")
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
