#!/usr/bin/env python3
"""Full optimization experiment: reference, optimize, figures-ready run dir.

Equivalent to `foilopt optimize` with the paper-configuration defaults;
kept as a script so the experiment is a one-liner:

    python scripts/run_experiment.py --out runs/experiment --iters 200
"""

import argparse
import sys

from foilopt.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="runs/experiment")
    parser.add_argument("--iters", type=int, default=1000)
    parser.add_argument("--rule", choices=["fixed", "armijo"], default="fixed")
    parser.add_argument("--config", default=None)
    args = parser.parse_args()

    argv = [
        "optimize",
        "--out", args.out,
        "--set", f"optimizer.max_iters={args.iters}",
        "--set", f"optimizer.rule={args.rule}",
    ]
    if args.config:
        argv += ["--config", args.config]
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
