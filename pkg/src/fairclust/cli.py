"""Command line entry point: ``fairclust run`` and ``fairclust oracle``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

import numpy as np

from .core import (ColorModel, Dataset, FairClustError, ObjectiveSpec, load_csv,
                   max_additive_violation)
from .harness import ExperimentConfig, derive_bounds, run_experiment, summarize
from .oracle import MAX_K, MAX_POINTS, brute_force_fair_opt

# CLI flag -> config field
_OVERRIDES = {
    "dataset": "dataset", "schema": "schema", "objective": "objective", "k_min": "k_min",
    "k_max": "k_max", "delta": "delta_bounds", "p_acc": "p_acc", "accuracy": "accuracy",
    "epsilon_relax": "epsilon_relax", "cluster_lb": "cluster_lb", "colorblind": "colorblind",
    "subsample": "subsample", "out": "out", "workers": "workers", "data_seed": "data_seed",
}


def _add_run(sub):
    p = sub.add_parser("run", help="run an experiment sweep and write CSV/JSON reports")
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--dataset", help="CSV path or synthetic generator name")
    p.add_argument("--schema", help="JSON schema for a CSV dataset")
    p.add_argument("--objective", choices=("kcenter", "kmedian", "kmeans"))
    p.add_argument("--k-min", type=int)
    p.add_argument("--k-max", type=int)
    p.add_argument("--colorblind", choices=("gonzalez", "kmeanspp", "localsearch"))
    p.add_argument("--delta", type=float, help="bound width delta (default 0.2)")
    p.add_argument("--p-acc", type=float, help="perturb two colors into marginals p_acc / 1-p_acc")
    p.add_argument("--accuracy", type=float, help="noisy multi-color labeler accuracy")
    p.add_argument("--epsilon-relax", type=float)
    p.add_argument("--cluster-lb", type=int, help="cluster size lower bound L (large-cluster mode)")
    p.add_argument("--threshold", action="store_true", help="also run the thresholding baseline")
    p.add_argument("--seed", type=int, help="first seed")
    p.add_argument("--trials", type=int, help="number of consecutive seeds")
    p.add_argument("--data-seed", type=int, help="seed of a synthetic generator")
    p.add_argument("--subsample", type=int, help="points per run; 0 keeps the full dataset")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output prefix; writes <out>.csv and <out>.json")


def _add_oracle(sub):
    p = sub.add_parser("oracle", help="brute-force optimum of a tiny fair clustering instance")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="CSV file (needs --schema)")
    src.add_argument("--random", type=int, metavar="N", help="random two-color instance with N points")
    p.add_argument("--schema")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--objective", choices=("kcenter", "kmedian", "kmeans"), default="kmedian")
    p.add_argument("--delta", type=float, default=0.2)
    p.add_argument("--allow-violation", type=float, default=0.0)


def config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    changes = {field: getattr(args, flag) for flag, field in _OVERRIDES.items()
               if getattr(args, flag) is not None}
    if changes.get("subsample") == 0:
        changes["subsample"] = None
    if args.threshold:
        changes["threshold"] = True
    if args.seed is not None or args.trials is not None:
        first = cfg.seeds[0] if args.seed is None else args.seed
        count = len(cfg.seeds) if args.trials is None else args.trials
        changes["seeds"] = tuple(range(first, first + count))
    return replace(cfg, **changes)


def _run(args) -> int:
    cfg = config_from_args(args)
    rows = run_experiment(cfg)
    for entry in summarize(rows):
        pof, gam = entry["pof"], entry["gamma"]
        lb = f" L={entry['cluster_lb']}" if entry["cluster_lb"] is not None else ""
        print(f"{entry['method']:>13} k={entry['k']:<3}{lb} runs={entry['runs']:<3} "
              f"POF {pof['mean']:.4f} [{pof['min']:.4f}, {pof['max']:.4f}]  "
              f"gamma {gam['mean']:.4f} (max {gam['max']:.4f})")
    failed = [r for r in rows if r.error]
    if failed:
        print(f"{len(failed)} of {len(rows)} runs failed; see the error column", file=sys.stderr)
    if cfg.out:
        print(f"wrote {cfg.out}.csv and {cfg.out}.json")
    return 0


def _oracle(args) -> int:
    if args.data:
        if not args.schema:
            raise SystemExit("--data needs --schema")
        ds = load_csv(args.data, args.schema)
    else:
        rng = np.random.default_rng(args.seed)
        n = args.random
        p = rng.random(n)
        ds = Dataset(rng.random((n, 2)), ColorModel("probabilistic", ("a", "b")),
                     probs=np.column_stack([p, 1 - p]), name="random")
    if ds.n > MAX_POINTS or args.k > MAX_K:
        raise SystemExit(f"oracle handles at most {MAX_POINTS} points and k <= {MAX_K}")
    obj = ObjectiveSpec.from_name(args.objective, args.k)
    spec = derive_bounds(ds, args.delta)
    res = brute_force_fair_opt(ds, args.k, obj.p, spec, args.allow_violation)
    out = {"feasible": res.feasible, "optimum": res.optimum, "enumerated": res.enumerated_count}
    if res.feasible:
        out["centers"] = list(res.witness.centers)
        out["assignment"] = res.witness.assignment.tolist()
        out["gamma"] = max_additive_violation(ds, res.witness, spec).gamma
    print(json.dumps(out, indent=1))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fairclust", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run(sub)
    _add_oracle(sub)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args) if args.command == "run" else _oracle(args)
    except FairClustError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
