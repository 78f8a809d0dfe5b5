"""Command line entry point.

Exit codes: 0 success, 1 invalid configuration or arguments, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml
from pydantic import ValidationError

from .config import POLICIES, ExperimentConfig
from .experiment import AXES, run_scenario, sweep, train_estimators

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("mecoffload")


def _load(args):
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg = cfg.with_updates(seed=args.seed)
    return cfg


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def cmd_run(args):
    cfg = _load(args)
    row = run_scenario(cfg, args.out)
    print(json.dumps(row))


def cmd_eval_oracle(args):
    cfg = _load(args)
    row = run_scenario(cfg.with_updates(policy={"name": "oracle"}), args.out)
    print(json.dumps(row))


def cmd_sweep(args):
    cfg = _load(args)
    values = _floats(args.values)
    if not values:
        raise ValueError("--values is empty")
    policies = args.policies.split(",") if args.policies else [cfg.policy.name]
    unknown = [p for p in policies if p not in POLICIES]
    if unknown:
        raise ValueError(f"unknown policies {unknown}; choose from {POLICIES}")
    seeds = _ints(args.seeds) if args.seeds else [cfg.seed]
    out = Path(args.out)
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / f"sweep_{args.axis}.csv"
    rows = sweep(cfg, args.axis, values, policies, seeds, out)
    print(f"{len(rows)} rows -> {out}")


def cmd_train_estimator(args):
    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    est = train_estimators(cfg)
    est.delay.save(out / "delay_estimator.npz")
    if est.energy is not None:
        est.energy.save(out / "energy_estimator.npz")
    summary = {name: {"val_mse": f.val_mse, "val_r2": f.val_r2} for name, f in est.fits.items()}
    (out / "fit.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary))


def build_parser():
    parser = argparse.ArgumentParser(prog="mecoffload", description="MEC task offloading simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help):
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--out", required=True, help=out_help)
        p.add_argument("--seed", type=int, help="override the config seed")

    p = sub.add_parser("run", help="bootstrap, train and run the configured policy")
    common(p, "output directory for outcomes.csv and aggregate.csv")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="aggregate rows over an axis, policies and seeds")
    common(p, "output CSV path or directory")
    p.add_argument("--axis", required=True, choices=sorted(AXES))
    p.add_argument("--values", required=True, help="comma separated axis values")
    p.add_argument("--policies", help="comma separated policy names (default: config policy)")
    p.add_argument("--seeds", help="comma separated seeds (default: config seed)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("train-estimator", help="collect samples and fit the estimators offline")
    common(p, "output directory for the .npz estimators")
    p.set_defaults(func=cmd_train_estimator)

    p = sub.add_parser("eval-oracle", help="run the privileged greedy oracle")
    common(p, "output directory for outcomes.csv and aggregate.csv")
    p.set_defaults(func=cmd_eval_oracle)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ValidationError, ValueError, FileNotFoundError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
