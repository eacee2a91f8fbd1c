"""Command line entry point: ``clrajo run | validate | demo``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .config import ConfigError, ExperimentConfig, Sweep, load_config
from .harness import run_experiment
from .report import emit_report

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
DEMO_TOLERANCE = 1e-12


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clrajo", description="XL-RIS channel estimation simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte Carlo sweep and write the NMSE report")
    run.add_argument("--config", required=True, help="experiment config (TOML)")
    run.add_argument("--out", required=True, help="report path")
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    run.add_argument("--seed", type=_u64, help="override the master seed")
    run.add_argument("--threads", type=_positive, default=1, help="worker processes")

    val = sub.add_parser("validate", help="check a config file without running it")
    val.add_argument("--config", required=True)

    demo = sub.add_parser("demo", help="noiseless exact-recovery check at desk scale")
    demo.add_argument("--trials", type=_positive, default=5)
    return parser


def demo_config(trials: int = 5) -> ExperimentConfig:
    return ExperimentConfig(sweep=Sweep("category", ("far-far", "far-near", "near-near")),
                            trials=trials, snr_db=float("inf"), seed=1)


def _demo(trials: int) -> int:
    report = run_experiment(demo_config(trials))
    ok = True
    for point in report.points:
        for name, st in point.estimators.items():
            worst = max(st.nmse) if st.nmse else float("nan")
            good = st.failed == 0 and worst < DEMO_TOLERANCE
            ok &= good
            print(f"{'PASS' if good else 'FAIL'}  {point.axis_value:<10} {name:<8} "
                  f"max NMSE {worst:.3e}  failed {st.failed}/{st.trials}")
    print("demo:", "PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_RUNTIME


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "demo":
        return _demo(args.trials)
    try:
        cfg = load_config(args.config)
        if args.command == "run" and args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print(f"ok: {args.config} (hash {cfg.hash()})")
        return EXIT_OK
    try:
        report = run_experiment(cfg, threads=args.threads)
        emit_report(report, args.format, args.out)
    except Exception as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    failed = sum(st.failed for p in report.points for st in p.estimators.values())
    print(f"wrote {args.out} ({len(report.points)} points, {failed} failed trial results)")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
