#!/usr/bin/env python3
"""Render every available figure for a run directory (delegates to plots/)."""

import argparse
import subprocess
import sys
from pathlib import Path

RENDERER = Path(__file__).resolve().parents[1] / "plots" / "render_figures.py"
FIGURES = ("mesh", "fields", "history", "cp-match", "geometry")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("run_dir")
    parser.add_argument("--out-dir", default=None)
    args = parser.parse_args()
    out_dir = Path(args.out_dir or args.run_dir)

    failures = 0
    for figure in FIGURES:
        out = out_dir / f"{figure.replace('-', '_')}.png"
        result = subprocess.run(
            [sys.executable, str(RENDERER), "--run-dir", args.run_dir,
             "--figure", figure, "--out", str(out)],
            capture_output=True,
            text=True,
        )
        status = "ok" if result.returncode == 0 else f"skipped ({result.stderr.strip()})"
        print(f"{figure}: {status}")
        failures += result.returncode != 0
    return 0 if failures < len(FIGURES) else 1


if __name__ == "__main__":
    sys.exit(main())
