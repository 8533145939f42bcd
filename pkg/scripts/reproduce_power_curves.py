#!/usr/bin/env python3
"""Run the power study end to end and report where the tables landed.

Thin wrapper over ``lasso-gate power``: picks the full study config by
default, or the smoke config with --smoke, and forwards --threads.
"""

import argparse
import sys
from pathlib import Path

from lasso_gate.cli import main as cli_main

HERE = Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="power_results", help="output directory")
    ap.add_argument("--config", help="key=value study config (overrides the bundled ones)")
    ap.add_argument("--smoke", action="store_true",
                    help="run the minutes-scale smoke config instead of the full study")
    ap.add_argument("--threads", type=int)
    args = ap.parse_args()
    if args.config:
        cfg = Path(args.config)
    else:
        cfg = HERE / ("power_smoke.cfg" if args.smoke else "power_study.cfg")
    argv = ["power", "--config", str(cfg), "--out", args.out]
    if args.threads is not None:
        argv += ["--threads", str(args.threads)]
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
