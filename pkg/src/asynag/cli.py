"""Command-line entry point: run a campaign or verify a stored trace."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .campaign import ExperimentConfig, run_campaign, verify_run
from .game import ConfigurationError
from .trace import TraceFormatError


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="asynag",
        description="Simulate asynchronous push-sum equilibrium seeking on Cournot games.",
    )
    ap.add_argument("--config", metavar="PATH", help="key = value experiment file")
    ap.add_argument("--override", metavar="KEY=VALUE", action="append", default=[],
                    help="override one config key (repeatable)")
    ap.add_argument("--out", metavar="DIR", help="output directory for CSV files")
    ap.add_argument("--workers", type=int, default=1, metavar="N", help="parallel runs")
    ap.add_argument("--verify", metavar="TRACE", help="check a stored event trace and exit")
    ap.add_argument("--show-config", action="store_true",
                    help="print the resolved configuration and exit")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.verify:
        try:
            report = verify_run(args.verify)
        except (TraceFormatError, OSError) as exc:
            print(f"error: {args.verify}: {exc}", file=sys.stderr)
            return 2
        sys.stdout.write(report.to_text())
        return 0 if report.ok else 1

    try:
        if args.config:
            cfg = ExperimentConfig.load(args.config, args.override)
        else:
            cfg = ExperimentConfig.from_text("", args.override)
    except (ConfigurationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.show_config:
        sys.stdout.write(cfg.to_text())
        return 0
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return 2

    out = Path(args.out) if args.out else Path("asynag-out")
    result = run_campaign(cfg, out, workers=args.workers)
    sys.stdout.write((out / "summary.txt").read_text())
    return 1 if result.failed else 0


if __name__ == "__main__":
    sys.exit(main())
