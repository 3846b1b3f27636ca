"""Command line front end.

    gridmarket run <config> [--seed N] [--out DIR] [--early-stop]
    gridmarket sweep <config-glob | supply-list> --seeds N --out DIR [--early-stop]
    gridmarket analyze <records-dir> [--estimator hill|loglog|both] [--xmin-quantile Q]

``sweep`` takes either a glob of config files or a comma-separated supply
list (e.g. ``40,45,50``) applied to the default configuration; ``--seeds N``
runs seeds 0..N-1 for every config. ``analyze`` re-reads exported index CSVs,
pools the positive index changes across every run found, and fits the tail.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import harness, stats
from .model import ConfigError, SimConfig


def _cmd_run(args) -> int:
    config = harness.load_config(args.config)
    if args.seed is not None:
        config = replace(config, rng_seed=args.seed)
    record = harness.run_simulation(config, early_stop=args.early_stop)
    paths = harness.export([record], args.out)
    absorbed = record.absorbing
    print(f"run finished: {len(record.index_series)} slow steps, "
          f"{len(record.deltas)} deltas "
          f"({int(record.deltas.positive().size)} positive), "
          f"absorbed={'step ' + str(absorbed.step) if absorbed.found else 'no'}")
    for path in paths:
        print(f"  wrote {path}")
    return 0


def _parse_supply_list(text: str):
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        return None


def _cmd_sweep(args) -> int:
    supplies = _parse_supply_list(args.configs)
    if supplies:
        configs = [replace(SimConfig(), supply_per_tick=s) for s in supplies]
    else:
        paths = sorted(glob.glob(args.configs))
        if not paths:
            print(f"no config files match {args.configs!r}", file=sys.stderr)
            return 2
        configs = [harness.load_config(p) for p in paths]

    seeds = list(range(args.seeds))
    records, pooled_deltas, pooled_fits = harness.sweep(
        configs, seeds, early_stop=args.early_stop)
    paths = harness.export(records, args.out)
    paths += harness.export_pooled(pooled_deltas, pooled_fits, args.out)

    failures = [r for r in records if isinstance(r, harness.RunFailure)]
    print(f"sweep finished: {len(records)} runs ({len(failures)} failed), "
          f"{len(paths)} files in {args.out}")
    if pooled_fits:
        hill = pooled_fits["hill"]
        loglog = pooled_fits["loglog"]
        print(f"pooled tail: hill alpha={hill.exponent:.3f} (k={hill.n_tail}), "
              f"loglog slope={loglog.slope:.3f}")
    return 0


def _cmd_analyze(args) -> int:
    csvs = harness.find_index_csvs(args.records_dir)
    if not csvs:
        print(f"no *_index.csv files under {args.records_dir}", file=sys.stderr)
        return 2
    pooled = []
    for path in csvs:
        _, values, _ = harness.read_index_csv(path)
        if len(values) >= 2:
            pooled.extend(np.diff(values))
    positive = np.asarray([d for d in pooled if d > 0])

    result = {"n_runs": len(csvs), "n_deltas": len(pooled),
              "n_positive_deltas": int(positive.size), "fits": {}}
    wanted = ["hill", "loglog"] if args.estimator == "both" else [args.estimator]
    for name in wanted:
        fit_fn = stats.fit_hill if name == "hill" else stats.fit_loglog
        try:
            fit = fit_fn(positive, xmin_quantile=args.xmin_quantile)
            result["fits"][name] = harness.tail_fit_to_dict(fit)
        except (stats.FitRefusedError, ValueError) as exc:
            result["fits"][name] = {"error": str(exc)}

    text = json.dumps(result, indent=2, sort_keys=True)
    print(text)
    out_path = os.path.join(args.records_dir, "analysis.json")
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridmarket",
                                     description="GCU market simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one simulation from a config file")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default="out")
    p_run.add_argument("--early-stop", action="store_true")
    p_run.set_defaults(fn=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a config x seed sweep")
    p_sweep.add_argument("configs",
                         help="glob of config files, or supply list like 40,45,50")
    p_sweep.add_argument("--seeds", type=int, required=True)
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--early-stop", action="store_true")
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_an = sub.add_parser("analyze", help="pool exported runs and fit the tail")
    p_an.add_argument("records_dir")
    p_an.add_argument("--estimator", choices=["hill", "loglog", "both"],
                      default="both")
    p_an.add_argument("--xmin-quantile", type=float,
                      default=stats.DEFAULT_XMIN_QUANTILE)
    p_an.set_defaults(fn=_cmd_analyze)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
