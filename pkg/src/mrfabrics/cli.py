"""Command line: ``run``, ``batch`` and ``bench-horizon`` on scenario files.

Exit codes: 0 success, 2 configuration error, 3 planner failure.
Set ``MRFABRICS_LOG`` (DEBUG, INFO, WARNING, ...) to change log verbosity.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .errors import ConfigError
from .harness import batch, bench_horizon, run, write_outputs
from .scenario import load_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PLANNER = 3


def _int_list(text):
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("horizons must be positive integers")
    return vals


def _modes(text):
    return [m.strip() for m in text.replace(" ", ",").split(",") if m.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mrfabrics", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario")
    r.add_argument("scenario")
    r.add_argument("--mode", choices=["mrdf", "rf", "rf-cv"], default=None)
    r.add_argument("--horizon", type=int, default=None, help="rollout steps K")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", default=None, help="directory for trajectory.csv and metrics.json")

    b = sub.add_parser("batch", help="seeded randomized runs, aggregated per mode")
    b.add_argument("scenario")
    b.add_argument("--runs", type=int, required=True)
    b.add_argument("--modes", type=_modes, default=["mrdf", "rf"])
    b.add_argument("--horizon", type=int, default=None)
    b.add_argument("--out", default=None, help="directory for summary.txt and summary.json")

    h = sub.add_parser("bench-horizon", help="per-step compute time against rollout horizon")
    h.add_argument("scenario")
    h.add_argument("--horizons", type=_int_list, default=[5, 10, 20, 40, 80])
    h.add_argument("--duration", type=float, default=2.0, help="simulated seconds per horizon")
    h.add_argument("--mode", choices=["rf", "rf-cv"], default="rf")
    h.add_argument("--rounds", type=int, default=3, help="interleaved repetitions per horizon")
    return p


def _configure_logging():
    level = os.environ.get("MRFABRICS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _cmd_run(args) -> int:
    scenario = load_scenario(args.scenario).with_overrides(args.mode, args.horizon, args.seed)
    metrics, traj = run(scenario, record=args.out is not None)
    print(json.dumps(metrics.as_record(), indent=2))
    if args.out:
        write_outputs(args.out, metrics, traj)
    return EXIT_PLANNER if metrics.failure else EXIT_OK


def _cmd_batch(args) -> int:
    if args.runs < 1:
        raise ConfigError("--runs must be >= 1")
    scenario = load_scenario(args.scenario).with_overrides(horizon=args.horizon)
    try:
        result = batch(scenario, args.runs, args.modes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    print(result.table())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.txt").write_text(result.table() + "\n")
        (out / "summary.json").write_text(result.to_json())
    failed = any(r["failure"] for r in result.records)
    return EXIT_PLANNER if failed else EXIT_OK


def _cmd_bench(args) -> int:
    if args.rounds < 1 or args.duration <= 0:
        raise ConfigError("--rounds must be >= 1 and --duration positive")
    scenario = load_scenario(args.scenario)
    table = bench_horizon(scenario, args.horizons, t_max=args.duration, mode=args.mode,
                          rounds=args.rounds)
    print(f"{'K':>5} {'median [ms]':>12} {'p95 [ms]':>10}")
    for K, row in table.items():
        print(f"{K:>5} {row['median_ms']:>12.4f} {row['p95_ms']:>10.4f}")
    return EXIT_OK


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    handlers = {"run": _cmd_run, "batch": _cmd_batch, "bench-horizon": _cmd_bench}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
