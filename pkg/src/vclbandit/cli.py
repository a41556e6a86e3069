"""Command-line entry point.

Subcommands::

    vclbandit run <config.json>
    vclbandit sweep <config.json>
    vclbandit lowerbound --policy vcl --d 2 --T 5000 --eps 2 --samples 200
    vclbandit potential --T 100000 --eps 2

Every subcommand accepts ``--seed`` (overrides ``base_seed``), ``--jobs``
(worker processes, default all cores) and ``--out`` (output file).

Exit codes: 0 success, 1 failed check, 2 configuration error,
3 construction-validity error.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .errors import ConfigError, ConstructionError
from .harness import (
    ExperimentConfig,
    aggregate,
    lowerbound_eval,
    rows_to_csv,
    run_experiment,
    sweep,
)
from .policies import POLICIES
from .potential import tightness_report

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_CONSTRUCTION = 0, 1, 2, 3


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="base seed (overrides the config)")
    common.add_argument("--jobs", type=_positive_int, default=None,
                        help="worker processes (default: all cores)")
    common.add_argument("--out", default=None, help="output file (default: stdout or config path)")

    parser = argparse.ArgumentParser(prog="vclbandit", description="Linear contextual bandit lab.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run one experiment configuration")
    p.add_argument("config")
    p.add_argument("--full-trace", action="store_true",
                   help="record cumulative regret at every round")

    p = sub.add_parser("sweep", parents=[common], help="fit the regret growth exponent over horizons")
    p.add_argument("config")

    p = sub.add_parser("lowerbound", parents=[common], help="suboptimal pulls on hard instances")
    p.add_argument("--policy", choices=sorted(POLICIES), default="vcl")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--T", type=int, default=5000)
    p.add_argument("--eps", type=float, default=2.0)
    p.add_argument("--samples", type=int, default=100)

    p = sub.add_parser("potential", parents=[common], help="check the tight potential schedule")
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--eps", type=float, default=2.0)
    p.add_argument("--csv", action="store_true", help="write per-round rows to --out")
    return parser


def _emit(text: str, path: Optional[str]) -> None:
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load(args, allow_horizon_list: bool = False) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config, allow_horizon_list)
    if args.seed is not None:
        cfg.base_seed = args.seed
    if args.out is not None:
        cfg.output_path = args.out
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    if args.full_trace:
        cfg.checkpoints = list(range(1, cfg.horizon + 1))
    rows = run_experiment(cfg, jobs=args.jobs)
    if not cfg.output_path:
        sys.stdout.write(rows_to_csv(rows))
    else:
        final = aggregate(rows)[-1]
        print(f"wrote {len(rows)} rows to {cfg.output_path}; "
              f"final mean regret {final.mean:.6g} ± {final.std_error:.3g}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args, allow_horizon_list=True)
    out = cfg.output_path
    table = sweep(cfg, jobs=args.jobs)
    _emit(table.to_csv(), out)
    print(f"{table.policy}: {table.slope_text()}")
    return EXIT_OK


def cmd_lowerbound(args) -> int:
    summary = lowerbound_eval(args.policy, args.d, args.T, args.eps, args.samples,
                              base_seed=args.seed or 0, jobs=args.jobs)
    if args.out:
        _emit(summary.to_csv(), args.out)
    print(summary.to_text())
    return EXIT_OK if summary.floor_holds else EXIT_CHECK


def cmd_potential(args) -> int:
    if not 0 < args.eps <= 2:
        raise ConfigError("eps must lie in (0, 2]")
    if args.T < 1:
        raise ConfigError("T must be positive")
    report = tightness_report(args.T, args.eps)
    print(report.to_text())
    if args.csv:
        _emit(report.to_csv(), args.out)
    if args.eps != 2.0:
        return EXIT_OK if report.bound_holds else EXIT_CHECK
    ok = report.tight_ok() and report.bound_holds
    print(f"tight          {ok}")
    return EXIT_OK if ok else EXIT_CHECK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "lowerbound": cmd_lowerbound,
            "potential": cmd_potential}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConstructionError as exc:
        print(f"construction error: {exc}", file=sys.stderr)
        return EXIT_CONSTRUCTION


if __name__ == "__main__":
    sys.exit(main())
