#!/usr/bin/env python3
"""All verification stages in sequence: mesh, flow, bounds, descent, gradients.

Writes one subdirectory per stage under --out and stops at the first
failure (nonzero exit), mirroring the acceptance order.
"""

import argparse
import sys
from pathlib import Path

from foilopt.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="runs/verification")
    parser.add_argument("--skip-grad-check", action="store_true",
                        help="skip the finite-difference gradient sweep (slow)")
    args = parser.parse_args()
    out = Path(args.out)

    stages = [
        ["mesh", "--out", str(out / "mesh")],
        ["flow", "--out", str(out / "flow")],
        ["bounds-audit", "--out", str(out / "bounds")],
        ["descent-demo", "--out", str(out / "descent")],
    ]
    if not args.skip_grad_check:
        stages.append(["grad-check", "--out", str(out / "grad-check")])

    for argv in stages:
        print(f"== foilopt {' '.join(argv)}")
        code = cli_main(argv)
        if code != 0:
            print(f"stage {argv[0]} failed with exit code {code}", file=sys.stderr)
            return code
    print("all verification stages passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
