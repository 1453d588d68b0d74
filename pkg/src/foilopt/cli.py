"""Batch command-line entry points for every stage and verification suite.

Exit codes: 0 success, 1 numerical failure, 2 configuration error.  The
default output root comes from the FOILOPT_OUT environment variable (falls
back to ./runs); every command writes a run-metadata file with the fully
resolved configuration.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import bounds as boundsmod
from . import descent as descmod
from . import geometry as geomod
from . import meshgen as meshmod
from . import pipeline as pl
from .config import RunConfig, apply_overrides, load_config, save_metadata
from .errors import ConfigError, ConvergenceError, EvaluationError, MeshValidityError, NonphysicalStateError

_NUMERICAL_ERRORS = (ConvergenceError, EvaluationError, MeshValidityError, NonphysicalStateError)


def _out_dir(args, default_name):
    root = Path(args.out) if args.out else Path(os.environ.get("FOILOPT_OUT", "runs"))
    out = root if args.out else root / default_name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.set:
        cfg = apply_overrides(cfg, args.set)
    return cfg


def cmd_mesh(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, "mesh")
    design = geomod.naca0012_cst()
    curve = geomod.sample_boundary(design, cfg.cst, cfg.grid.i_max)
    grid0 = meshmod.parabolic_march(curve, cfg.farfield, cfg.grid.j_max)
    grid, info = meshmod.elliptic_smooth(grid0, cfg.mesh_solver)
    report = meshmod.check_validity(grid, curve, cfg.farfield)

    meshmod.save_grid(out / "grid.txt", grid)
    meshmod.save_mesh_csv(out / "mesh.csv", grid)
    geomod.save_boundary_csv(out / "boundary.csv", curve)
    with open(out / "report.txt", "w") as fh:
        fh.write(f"iterations = {info['iterations']}\n")
        fh.write(f"residual = {info['residual']:.17g}\n")
        fh.write(f"min_jacobian = {report.min_jacobian:.17g}\n")
        fh.write(f"crossing_cells = {report.crossing_cells}\n")
        fh.write(f"wall_conforms = {report.wall_conforms}\n")
        fh.write(f"farfield_conforms = {report.farfield_conforms}\n")
    save_metadata(out / "metadata.txt", cfg, {"command": "mesh", "iterations": info["iterations"]})
    print(f"mesh: {grid.i_max}x{grid.nj} grid, residual {info['residual']:.3e}, "
          f"min Jacobian {report.min_jacobian:.3e}, {info['iterations']} iterations -> {out}")
    ok = info["residual"] <= cfg.mesh_solver.tol and report.is_valid
    return 0 if ok else 1


def cmd_flow(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, "flow")
    design = geomod.naca0012_cst()
    case = pl.run_case(design, cfg)
    pl.export_fields_csv(out / "fields.csv", case, cfg)
    pl.export_surface_cp_csv(out / "surface_cp.csv", case)
    meshmod.save_mesh_csv(out / "mesh.csv", case.grid)
    save_metadata(
        out / "metadata.txt",
        cfg,
        {"command": "flow", "flow_iterations": case.flow_iterations,
         "flow_residual": case.flow_residual},
    )
    print(f"flow: residual {case.flow_residual:.3e} in {case.flow_iterations} iterations -> {out}")
    return 0


def cmd_reference(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, "reference")
    ref = pl.make_reference(cfg)
    pl.save_reference_csv(out / "reference_cp.csv", ref)
    save_metadata(out / "metadata.txt", cfg, {"command": "reference", "stations": len(ref.stations)})
    print(f"reference: {len(ref.stations)} upper-surface stations -> {out}")
    return 0


def cmd_optimize(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, "optimize")
    reference = (
        pl.load_reference_csv(args.reference) if args.reference else pl.make_reference(cfg)
    )
    result = pl.optimize(cfg, reference)

    descmod.save_history_csv(out / "history.csv", result.history)
    geomod.save_design(out / "design.txt", result.design)
    pl.export_geometry_csv(out / "geometry.csv", geomod.naca0012_cst(), result.design, cfg)
    if result.final_case is not None:
        pl.export_surface_cp_csv(out / "surface_cp.csv", result.final_case, reference)
        pl.export_fields_csv(out / "fields.csv", result.final_case, cfg)
        meshmod.save_mesh_csv(out / "mesh.csv", result.final_case.grid)
    pl.save_reference_csv(out / "reference_cp.csv", reference)
    hist = result.history.history
    save_metadata(
        out / "metadata.txt",
        cfg,
        {
            "command": "optimize",
            "termination": result.history.termination,
            "iterations": hist[-1].k,
            "objective_initial": hist[0].objective,
            "objective_final": hist[-1].objective,
            "grad_norm_final": hist[-1].grad_norm,
        },
    )
    print(
        f"optimize: {result.history.termination} after {hist[-1].k} iterations, "
        f"objective {hist[0].objective:.6e} -> {hist[-1].objective:.6e} -> {out}"
    )
    if result.history.termination.startswith("evaluation_failure"):
        return 1
    return 0


def cmd_grad_check(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, "grad-check")
    reference = pl.make_reference(cfg)
    rng = np.random.default_rng(cfg.optimizer.seed)
    rel_tol, abs_floor = 1e-4, 1e-8

    rows = []
    overall = True
    for trial in range(args.designs):
        z = geomod.naca0012_cst().flatten()
        if trial > 0 or not args.at_reference:
            z = z + rng.uniform(-1.0, 1.0, z.size) * cfg.optimizer.start_perturbation
        grad, _ = pl.evaluate_gradient(z, cfg, reference)
        fd, best_rel = _fd_gradient_sweep(z, cfg, reference, grad, abs_floor)
        ok = bool(np.all((best_rel <= rel_tol) | (np.abs(fd) <= abs_floor)))
        overall &= ok
        for k in range(z.size):
            rows.append((trial, k, grad[k], fd[k], best_rel[k]))
        print(f"design {trial}: max rel err {best_rel.max():.3e} -> {'PASS' if ok else 'FAIL'}")

    with open(out / "grad_check.csv", "w") as fh:
        fh.write("design,component,adjoint,fd,rel_err\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in row) + "\n")
    save_metadata(out / "metadata.txt", cfg, {"command": "grad-check", "pass": overall})
    return 0 if overall else 1


def _fd_gradient_sweep(z, cfg, reference, grad, abs_floor, steps=(1e-4, 1e-5, 1e-6)):
    """Central FD of the reduced objective at tighter oracle tolerances."""
    import dataclasses

    cfg_fd = dataclasses.replace(
        cfg,
        mesh_solver=dataclasses.replace(cfg.mesh_solver, tol=min(cfg.mesh_solver.tol, 1e-10)),
        flow_solver=dataclasses.replace(cfg.flow_solver, tol=min(cfg.flow_solver.tol, 1e-10)),
    )
    warm = pl.WarmStart()
    pl.evaluate_objective(z, cfg_fd, reference, warm)
    best_rel = np.full(z.size, np.inf)
    fd_best = np.zeros(z.size)
    for h in steps:
        for k in range(z.size):
            zp = z.copy()
            zp[k] += h
            zm = z.copy()
            zm[k] -= h
            jp, _ = pl.evaluate_objective(zp, cfg_fd, reference, warm)
            jm, _ = pl.evaluate_objective(zm, cfg_fd, reference, warm)
            fd = (jp - jm) / (2.0 * h)
            rel = abs(grad[k] - fd) / max(abs(fd), abs_floor)
            if rel < best_rel[k]:
                best_rel[k] = rel
                fd_best[k] = fd
    return fd_best, best_rel


def cmd_bounds_audit(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, "bounds-audit")
    if not 0.0 < args.zeta:
        print("zeta must be positive", file=sys.stderr)
        return 2
    family, objective = boundsmod.make_synthetic_family(seed=cfg.optimizer.seed)
    rows = boundsmod.run_audit(
        family, objective, n_samples=args.samples, zeta=args.zeta, seed=cfg.optimizer.seed
    )
    boundsmod.save_audit_csv(out / "bounds_audit.csv", rows)
    violations = [r for r in rows if r.violated]
    save_metadata(
        out / "metadata.txt",
        cfg,
        {"command": "bounds-audit", "samples": args.samples, "violations": len(violations)},
    )
    print(f"bounds-audit: {len(rows)} checks, {len(violations)} violations -> {out}")
    return 0 if not violations else 1


def cmd_descent_demo(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, "descent-demo")
    zeta = args.zeta
    spec = descmod.DirectionSpec(c1p=1.0, c2p=1.0, zeta=zeta)
    constants = descmod.convert_constants(spec)

    m, lipschitz = 12, 1.0
    hess = np.eye(m) * lipschitz
    rng = np.random.default_rng(cfg.optimizer.seed)
    z0 = rng.standard_normal(m)
    z0 /= np.linalg.norm(z0)
    aux = rng.standard_normal(m)

    def objective(z):
        return 0.5 * float(z @ hess @ z)

    def oracle(z):
        return descmod.adversarial_gradient(hess @ z, zeta, aux)

    rules = {
        "bounded": (descmod.BoundedStep(gamma=constants.c1, lipschitz=lipschitz), 5000),
        "diminishing": (descmod.DiminishingStep(t0=2.0 / lipschitz), 500000),
        "armijo": (descmod.ArmijoStep(t0=1.0, theta=0.5, sigma=0.5 * constants.curvature_cap), 5000),
    }
    all_ok = True
    for name, (rule, iters) in rules.items():
        result = descmod.run_descent(
            objective, oracle, z0, rule, direction_spec=spec,
            grad_tol=1e-6 / (1.0 + zeta), max_iters=iters,
        )
        exact_norm = float(np.linalg.norm(hess @ result.z))
        descmod.save_history_csv(out / f"history_{name}.csv", result)
        ok = exact_norm < 1e-6
        all_ok &= ok
        print(f"{name}: exact |grad| {exact_norm:.3e} after {result.history[-1].k} iterations "
              f"-> {'PASS' if ok else 'FAIL'}")
    save_metadata(out / "metadata.txt", cfg, {"command": "descent-demo", "zeta": zeta})
    return 0 if all_ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foilopt",
        description="Full-potential airfoil shape optimization toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--out", help="output directory (default: $FOILOPT_OUT/<command>)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted-key config override, repeatable")

    common(sub.add_parser("mesh", help="generate and smooth the O-grid"))
    common(sub.add_parser("flow", help="solve the full-potential flow"))
    common(sub.add_parser("reference", help="compute the reference surface pressure"))
    p = sub.add_parser("optimize", help="run the pressure-matching optimization")
    common(p)
    p.add_argument("--reference", help="reference-Cp CSV (default: computed from NACA0012)")
    p = sub.add_parser("grad-check", help="compare adjoint and FD gradients")
    common(p)
    p.add_argument("--designs", type=int, default=3)
    p.add_argument("--at-reference", action="store_true",
                   help="check the first design at the unperturbed reference")
    p = sub.add_parser("bounds-audit", help="audit the error-propagation bounds")
    common(p)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--zeta", type=float, default=0.25)
    p = sub.add_parser("descent-demo", help="run the three step rules on a quadratic")
    common(p)
    p.add_argument("--zeta", type=float, default=0.3)
    return parser


_COMMANDS = {
    "mesh": cmd_mesh,
    "flow": cmd_flow,
    "reference": cmd_reference,
    "optimize": cmd_optimize,
    "grad-check": cmd_grad_check,
    "bounds-audit": cmd_bounds_audit,
    "descent-demo": cmd_descent_demo,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
