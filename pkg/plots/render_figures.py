#!/usr/bin/env python3
"""Render paper-style figures from a completed run directory.

Reads only the CSV files written by the batch tool (mesh.csv, fields.csv,
history.csv, surface_cp.csv, geometry.csv) and never recomputes physics.
One figure per invocation:

    python render_figures.py --run-dir RUN --figure mesh --out mesh.png

Figures: mesh (near/global index-line views), fields (rho, Cp, vx, vy
filled contours), history (objective and gradient-norm curves), cp-match
(computed vs reference surface pressure), geometry (reference vs optimized
airfoil overlay).  Missing or malformed inputs exit nonzero.
"""

import argparse
import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

FIGURES = ("mesh", "fields", "history", "cp-match", "geometry")


class InputError(RuntimeError):
    pass


def read_table(path: Path, required):
    if not path.exists():
        raise InputError(f"missing input file: {path}")
    with open(path) as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"empty input file: {path}") from None
    header = [h.strip() for h in header]
    for col in required:
        if col not in header:
            raise InputError(f"{path} lacks required column {col!r} (has {header})")
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    if data.ndim == 1:
        data = data[None, :]
    if data.shape[1] != len(header) or np.all(np.isnan(data)):
        raise InputError(f"{path} is garbled")
    return {name: data[:, k] for k, name in enumerate(header)}


def structured_xy(table):
    i = table["i"].astype(int)
    j = table["j"].astype(int)
    ni, nj = i.max(), j.max()
    if ni * nj != len(i):
        raise InputError("mesh table is not a full structured block")
    x = np.full((ni, nj), np.nan)
    y = np.full((ni, nj), np.nan)
    x[i - 1, j - 1] = table["x"]
    y[i - 1, j - 1] = table["y"]
    return x, y


def draw_grid_lines(ax, x, y):
    for jj in range(x.shape[1]):
        ax.plot(x[:, jj], y[:, jj], color="steelblue", lw=0.4)
    for ii in range(x.shape[0]):
        ax.plot(x[ii, :], y[ii, :], color="steelblue", lw=0.4)


def render_mesh(run_dir: Path, out: Path):
    table = read_table(run_dir / "mesh.csv", ["i", "j", "x", "y"])
    x, y = structured_xy(table)
    fig, axes = plt.subplots(1, 2, figsize=(11, 5))
    for ax in axes:
        draw_grid_lines(ax, x, y)
        ax.set_aspect("equal")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    axes[0].set_xlim(-0.3, 1.3)
    axes[0].set_ylim(-0.6, 0.6)
    axes[0].set_title("near view")
    axes[1].set_title("global view")
    fig.suptitle("body-fitted O-grid")
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)


def render_fields(run_dir: Path, out: Path):
    table = read_table(run_dir / "fields.csv", ["i", "j", "x", "y", "rho", "cp", "vx", "vy"])
    x, y = structured_xy(table)
    fields = {}
    for name in ("rho", "cp", "vx", "vy"):
        f = np.full_like(x, np.nan)
        f[table["i"].astype(int) - 1, table["j"].astype(int) - 1] = table[name]
        fields[name] = f
    fig, axes = plt.subplots(2, 2, figsize=(11, 9))
    titles = {"rho": "density", "cp": "pressure coefficient", "vx": "v_x", "vy": "v_y"}
    for ax, (name, f) in zip(axes.ravel(), fields.items()):
        cs = ax.contourf(x, y, f, levels=31, cmap="viridis")
        fig.colorbar(cs, ax=ax, shrink=0.85)
        ax.set_aspect("equal")
        ax.set_xlim(-0.8, 1.8)
        ax.set_ylim(-1.2, 1.2)
        ax.set_title(titles[name])
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)


def render_history(run_dir: Path, out: Path):
    table = read_table(run_dir / "history.csv", ["k", "objective", "grad_norm"])
    fig, axes = plt.subplots(1, 2, figsize=(11, 4.5))
    axes[0].plot(table["k"], table["objective"], color="firebrick")
    axes[0].set_yscale("log")
    axes[0].set_xlabel("iteration")
    axes[0].set_ylabel("objective")
    axes[0].set_title("objective history")
    axes[1].plot(table["k"], table["grad_norm"], color="navy")
    axes[1].set_yscale("log")
    axes[1].set_xlabel("iteration")
    axes[1].set_ylabel("gradient norm")
    axes[1].set_title("gradient-norm history")
    for ax in axes:
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)


def render_cp_match(run_dir: Path, out: Path):
    table = read_table(run_dir / "surface_cp.csv", ["station", "x", "cp", "cp_ref"])
    mask = ~np.isnan(table["cp_ref"])
    if not np.any(mask):
        raise InputError("surface_cp.csv carries no reference values")
    order = np.argsort(table["x"][mask])
    fig, ax = plt.subplots(figsize=(7, 5))
    ax.plot(table["x"][mask][order], table["cp_ref"][mask][order], "k--", label="reference")
    ax.plot(table["x"][mask][order], table["cp"][mask][order], "o-", ms=3.5,
            color="firebrick", label="computed")
    ax.invert_yaxis()
    ax.set_xlabel("x/c")
    ax.set_ylabel("Cp")
    ax.set_title("surface-pressure matching (upper surface)")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)


def render_geometry(run_dir: Path, out: Path):
    table = read_table(run_dir / "geometry.csv", ["i", "x_ref", "y_ref", "x_opt", "y_opt"])
    fig, ax = plt.subplots(figsize=(9, 4))
    ax.plot(table["x_ref"], table["y_ref"], "k-", lw=1.5, label="reference")
    ax.plot(table["x_opt"], table["y_opt"], "--", color="firebrick", lw=1.5, label="optimized")
    ax.set_aspect("equal")
    ax.set_xlabel("x/c")
    ax.set_ylabel("y/c")
    ax.set_title("airfoil geometry overlay")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)


RENDERERS = {
    "mesh": render_mesh,
    "fields": render_fields,
    "history": render_history,
    "cp-match": render_cp_match,
    "geometry": render_geometry,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--run-dir", required=True, help="directory with the run CSV files")
    parser.add_argument("--figure", required=True, choices=FIGURES)
    parser.add_argument("--out", required=True, help="output image path (png/svg)")
    args = parser.parse_args(argv)

    run_dir = Path(args.run_dir)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        RENDERERS[args.figure](run_dir, out)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
