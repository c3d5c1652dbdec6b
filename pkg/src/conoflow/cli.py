"""Command line entry point.

    conoflow <kind> --config experiment.cfg --out results/

with kind one of: flow, glancing, crossing, reflect-scan, invariance,
curvature-check.  The config's `kind` must match the subcommand.  Exit
codes: 0 success, 2 hypothesis-violation refusal, 1 any error.  The only
environment knob is CONOFLOW_LOG_LEVEL (DEBUG/INFO/WARNING).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import KINDS, ConfigValidationError, validate
from .experiments import run


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conoflow",
        description="Bicharacteristic-flow and semiclassical-wave "
                    "experiments for interface-singular potentials.")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", required=True,
                       help="path to the experiment config")
        p.add_argument("--out", required=True,
                       help="output directory for artifacts")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("CONOFLOW_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)

    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 1

    try:
        cfg = validate(text)
    except ConfigValidationError as exc:
        print("error: invalid config:", file=sys.stderr)
        for item in exc.errors:
            print(f"  {item}", file=sys.stderr)
        return 1

    if cfg.kind != args.command:
        print(f"error: config kind = {cfg.kind!r} does not match "
              f"subcommand {args.command!r}", file=sys.stderr)
        return 1

    report = run(cfg, args.out)
    if report.status == "ok":
        print(f"{cfg.kind}: ok ({', '.join(report.artifacts)})")
    else:
        print(f"{cfg.kind}: {report.status}"
              + (f" [{report.error_code}] {report.error_message}"
                 if report.error_code else ""),
              file=sys.stderr)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
