"""Design evaluation chain and the pressure-matching optimization loop.

One design evaluation runs boundary sampling, parabolic marching, elliptic
smoothing, and the full-potential solve, then reduces the wall pressure
coefficient at the upper-surface stations to the scalar mismatch
objective.  Gradients come from the coupled flow/mesh adjoints.  Repeated
evaluations warm-start the mesh and flow solves from the previous
converged fields.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import adjoint as adjmod
from . import descent as descmod
from . import dualnum as dn
from . import flow as flowmod
from . import geometry as geomod
from . import meshgen as meshmod
from .config import RunConfig
from .errors import ConvergenceError, EvaluationError, MeshValidityError, NonphysicalStateError


@dataclass
class ReferencePressure:
    """Reference Cp at the upper-surface stations, upper TE -> LE order."""

    stations: np.ndarray
    cp_ref: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        if len(self.stations) != len(self.cp_ref):
            raise ValueError("station/value count mismatch")


@dataclass
class CaseResult:
    grid: meshmod.Grid
    state: flowmod.FlowState
    cp_wall: np.ndarray
    mesh_iterations: int
    flow_iterations: int
    mesh_residual: float
    flow_residual: float


@dataclass
class WarmStart:
    """Previous converged fields used to initialize the next evaluation."""

    grid: meshmod.Grid | None = None
    phi: np.ndarray | None = None


@dataclass
class OptimizeResult:
    design: geomod.DesignVector
    history: descmod.DescentResult
    reference: ReferencePressure
    final_case: CaseResult | None = None


def design_from_config(config: RunConfig) -> geomod.DesignVector:
    """Experiment start: NACA0012 coefficients plus a seeded perturbation."""
    base = geomod.naca0012_cst().flatten()
    rng = np.random.default_rng(config.optimizer.seed)
    z = base + rng.uniform(-1.0, 1.0, base.size) * config.optimizer.start_perturbation
    return geomod.DesignVector.from_flat(z)


def _check_surfaces(design: geomod.DesignVector, config: RunConfig):
    chi = geomod.chord_stations(config.grid.i_max, config.cst.sharpness)[1:-1]
    yu = geomod.cst_surface(chi, design.upper, config.cst.delta_upper, config.cst)
    yl = geomod.cst_surface(chi, design.lower, config.cst.delta_lower, config.cst)
    if np.any(yu <= yl):
        raise EvaluationError("upper and lower surfaces cross; design invalid")


def _lift_boundary_delta(grid0: meshmod.Grid, curve, farfield) -> meshmod.Grid:
    """Propagate the wall-row change smoothly into a warm grid's interior.

    The interior sensitivity of the Laplace grid to the boundary decays
    with distance, so blending the boundary delta by the radial fraction
    removes the dominant part of the warm-start defect.
    """
    grid = grid0.copy()
    dxb = curve.x[:-1] - grid.x[:, 0]
    dyb = curve.y[:-1] - grid.y[:, 0]
    t = meshmod.radial_fractions(grid.nj, farfield.stretch_ratio)
    decay = (1.0 - t) ** 2
    grid.x += dxb[:, None] * decay[None, :]
    grid.y += dyb[:, None] * decay[None, :]
    grid.x[:, 0] = curve.x[:-1]
    grid.y[:, 0] = curve.y[:-1]
    return grid


def _newton_mesh(grid0: meshmod.Grid, params, max_newton=8):
    """Newton polish of the interior Laplace-grid equations.

    Quadratic near the solution; returns None when the warm start is too
    far off (caller falls back to the ADI smoother).
    """
    import scipy.sparse.linalg as spla

    x = grid0.x.copy()
    y = grid0.y.copy()
    ni, nj = x.shape
    n_int = nj - 2
    target = max(params.tol * params.target_factor, 1e-12)
    best = None
    res_best = np.inf
    res_prev = np.inf
    for it in range(max_newton):
        lx, ly = meshmod.mesh_residual_fields(x, y)
        res = max(np.abs(lx).max(), np.abs(ly).max())
        if res < res_best:
            res_best = res
            best = (x.copy(), y.copy())
        if res <= target:
            return meshmod.Grid(x, y), {"iterations": it, "residual": res}
        if not np.isfinite(res) or res > 0.7 * res_prev:
            # stalled (for example at the roundoff floor): keep the best
            # iterate if it already satisfies the contract
            if res_best <= params.tol:
                return meshmod.Grid(best[0], best[1]), {"iterations": it, "residual": res_best}
            return None, None
        res_prev = res
        jac = adjmod.assemble_rm_interior(x, y)
        rhs = np.empty(2 * ni * n_int)
        rhs[0::2] = -np.transpose(lx, (1, 0)).ravel()
        rhs[1::2] = -np.transpose(ly, (1, 0)).ravel()
        try:
            delta = spla.splu(jac.tocsc()).solve(rhs)
        except RuntimeError:
            return None, None
        dx = delta[0::2].reshape(n_int, ni).T
        dy = delta[1::2].reshape(n_int, ni).T
        x[:, 1:-1] += dx
        y[:, 1:-1] += dy
    if res_best <= params.tol:
        return meshmod.Grid(best[0], best[1]), {"iterations": max_newton, "residual": res_best}
    return None, None


def _newton_flow(phi0, grid, metrics, fs, params, max_newton=10):
    """Newton on the flow residual with switches re-frozen per iterate."""
    import scipy.sparse.linalg as spla

    phi = phi0.copy()
    phi[:, -1] = flowmod.farfield_potential(grid.x[:, -1], grid.y[:, -1], fs)
    ni, nj = phi.shape
    nja = nj - 1
    target = max(params.tol * params.target_factor, 1e-12)
    phi_best = None
    res_best = np.inf
    res_prev = np.inf
    for it in range(max_newton + 1):
        try:
            fd = flowmod._face_data(phi, grid.x, grid.y, metrics, fs, params.kappa)
        except NonphysicalStateError:
            return None
        l_field = flowmod._residual_from_faces(fd)
        res = flowmod.residual_norm(l_field)
        if res < res_best:
            res_best = res
            phi_best = phi.copy()
        stalled = not np.isfinite(res) or res > 0.7 * res_prev
        if res <= target or (stalled and res_best <= params.tol) or (it == max_newton and res_best <= params.tol):
            if res_best <= params.tol:
                return flowmod.FlowState(
                    phi=phi_best, freestream=fs, converged=True,
                    residual=res_best, iterations=it,
                )
        if stalled or it == max_newton:
            return None
        res_prev = res
        jac = adjmod.assemble_rf_u(phi, grid.x, grid.y, metrics, fs, params.kappa, fd.switches)
        rhs = -np.transpose(l_field, (1, 0)).ravel()
        try:
            delta = spla.splu(jac.tocsc()).solve(rhs)
        except RuntimeError:
            return None
        phi[:, :nja] += delta.reshape(nja, ni).T
    return None


def run_case(design: geomod.DesignVector, config: RunConfig, warm: WarmStart | None = None) -> CaseResult:
    """Boundary -> mesh -> flow for one design; raises EvaluationError on failure.

    Warm evaluations first try a Newton polish of both states from the
    previous converged fields, falling back to the ADI smoother and AF2
    iteration whenever the polish does not contract.
    """
    _check_surfaces(design, config)
    curve = geomod.sample_boundary(design, config.cst, config.grid.i_max)
    try:
        grid = None
        mesh_info = None
        if warm is not None and warm.grid is not None:
            lifted = _lift_boundary_delta(warm.grid, curve, config.farfield)
            grid, mesh_info = _newton_mesh(lifted, config.mesh_solver)
            if grid is not None and meshmod._min_forward_jacobian(grid.x, grid.y) <= 0.0:
                grid = None
        if grid is None:
            if warm is not None and warm.grid is not None:
                grid0 = _lift_boundary_delta(warm.grid, curve, config.farfield)
            else:
                grid0 = meshmod.parabolic_march(curve, config.farfield, config.grid.j_max)
            grid, mesh_info = meshmod.elliptic_smooth(grid0, config.mesh_solver)
        report = meshmod.check_validity(grid, curve, config.farfield)
        if not report.is_valid:
            raise EvaluationError(
                f"smoothed mesh invalid (min Jacobian {report.min_jacobian:.3e})"
            )

        metrics = meshmod.flow_metrics(grid.x, grid.y)
        state = None
        if warm is not None and warm.phi is not None:
            state = _newton_flow(warm.phi, grid, metrics, config.freestream, config.flow_solver)
        if state is None:
            phi0 = warm.phi if warm is not None else None
            state = flowmod.solve_flow(grid, config.freestream, config.flow_solver, phi0=phi0)
    except (ConvergenceError, MeshValidityError, NonphysicalStateError) as exc:
        raise EvaluationError(f"{type(exc).__name__}: {exc}") from exc
    cp_wall = flowmod.surface_cp(state, grid, config.freestream)
    if warm is not None:
        warm.grid = grid
        warm.phi = state.phi
    return CaseResult(
        grid=grid,
        state=state,
        cp_wall=cp_wall,
        mesh_iterations=mesh_info["iterations"],
        flow_iterations=state.iterations,
        mesh_residual=mesh_info["residual"],
        flow_residual=state.residual,
    )


def objective_from_cp(cp_wall, reference: ReferencePressure):
    """1/2 sum of squared Cp mismatch over the reference stations."""
    diff = cp_wall[reference.stations] - reference.cp_ref
    return dn.total(diff * diff) * 0.5


def evaluate_objective(z, config: RunConfig, reference: ReferencePressure, warm: WarmStart | None = None):
    """Objective value and solver diagnostics at a flat design vector."""
    design = geomod.DesignVector.from_flat(z)
    case = run_case(design, config, warm)
    value = float(objective_from_cp(case.cp_wall, reference))
    diag = {
        "mesh_iterations": case.mesh_iterations,
        "flow_iterations": case.flow_iterations,
        "mesh_residual": case.mesh_residual,
        "flow_residual": case.flow_residual,
    }
    return value, diag


def evaluate_gradient(z, config: RunConfig, reference: ReferencePressure, case: CaseResult | None = None, warm: WarmStart | None = None):
    """Adjoint reduced gradient at z; reuses a converged case if given."""
    design = geomod.DesignVector.from_flat(z)
    if case is None:
        case = run_case(design, config, warm)
    system = adjmod.assemble_jacobians(
        design,
        config.cst,
        case.grid,
        case.state,
        config.flow_solver.kappa,
        lambda cp: objective_from_cp(cp, reference),
        mesh_tol=config.mesh_solver.tol,
        flow_tol=config.flow_solver.tol,
    )
    pair = adjmod.solve_adjoints(system, tol=config.adjoint_tol)
    grad = adjmod.reduced_gradient(z, pair.lam_mesh, system.rm_z, system.dj_dz)
    return grad, case


def make_reference(config: RunConfig, design: geomod.DesignVector | None = None) -> ReferencePressure:
    """Reference Cp from a converged solve at the given (default NACA0012) design."""
    design = design or geomod.naca0012_cst()
    case = run_case(design, config)
    stations = flowmod.upper_surface_stations(case.grid.ni)
    return ReferencePressure(
        stations=stations,
        cp_ref=case.cp_wall[stations].copy(),
        x=case.grid.x[stations, 0].copy(),
    )


def save_reference_csv(path, reference: ReferencePressure):
    with open(path, "w") as fh:
        fh.write("station,x,cp\n")
        for s, x, cp in zip(reference.stations, reference.x, reference.cp_ref):
            fh.write(f"{s},{x:.17g},{cp:.17g}\n")


def load_reference_csv(path) -> ReferencePressure:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    return ReferencePressure(
        stations=data[:, 0].astype(int), cp_ref=data[:, 2].copy(), x=data[:, 1].copy()
    )


def optimize(config: RunConfig, reference: ReferencePressure, z0=None, rule: str | None = None) -> OptimizeResult:
    """Fixed-step or Armijo descent on the reduced pressure-matching objective."""
    rule = rule or config.optimizer.rule
    z_start = np.asarray(z0, dtype=float) if z0 is not None else design_from_config(config).flatten()

    warm = WarmStart()
    case_holder: dict = {}

    def objective(z):
        value, _ = evaluate_objective(z, config, reference, warm)
        return value

    def oracle(z):
        grad, case = evaluate_gradient(z, config, reference, warm=warm)
        case_holder["case"] = case
        return grad

    opt = config.optimizer
    if rule == "fixed":
        step_rule = descmod.FixedStep(step=opt.step)
    elif rule == "armijo":
        step_rule = descmod.ArmijoStep(t0=opt.armijo_t0, theta=opt.armijo_theta, sigma=opt.armijo_sigma)
    else:
        raise ValueError(f"unknown rule {rule!r}")

    result = descmod.run_descent(
        objective,
        oracle,
        z_start,
        step_rule,
        grad_tol=opt.grad_tol,
        max_iters=opt.max_iters,
    )
    final_design = geomod.DesignVector.from_flat(result.z)
    final_case = case_holder.get("case")
    try:
        final_case = run_case(final_design, config, warm)
    except EvaluationError:
        pass
    return OptimizeResult(design=final_design, history=result, reference=reference, final_case=final_case)


# ---- run-directory exports ---------------------------------------------------


def export_fields_csv(path, case: CaseResult, config: RunConfig):
    """Node table: i, j, x, y, rho, cp, v_x, v_y (seam row duplicated)."""
    metrics = meshmod.flow_metrics(case.grid.x, case.grid.y)
    rho, cp, vx, vy = flowmod.pressure_field(
        case.state.phi, case.grid.x, case.grid.y, metrics, config.freestream
    )
    xc, yc = case.grid.closed()
    arrays = [np.vstack([a, a[:1]]) for a in (rho, cp, vx, vy)]
    with open(path, "w") as fh:
        fh.write("i,j,x,y,rho,cp,vx,vy\n")
        for i in range(case.grid.i_max):
            for j in range(case.grid.nj):
                fh.write(
                    f"{i + 1},{j + 1},{xc[i, j]:.17g},{yc[i, j]:.17g},"
                    f"{arrays[0][i, j]:.17g},{arrays[1][i, j]:.17g},"
                    f"{arrays[2][i, j]:.17g},{arrays[3][i, j]:.17g}\n"
                )


def export_surface_cp_csv(path, case: CaseResult, reference: ReferencePressure | None = None):
    """Wall stations: station, x, cp (+ cp_ref at reference stations)."""
    ni = case.grid.ni
    cp = case.cp_wall
    ref_col = np.full(ni, np.nan)
    if reference is not None:
        ref_col[reference.stations] = reference.cp_ref
    with open(path, "w") as fh:
        fh.write("station,x,cp,cp_ref\n" if reference is not None else "station,x,cp\n")
        for i in range(ni):
            row = f"{i},{case.grid.x[i, 0]:.17g},{cp[i]:.17g}"
            if reference is not None:
                row += f",{ref_col[i]:.17g}"
            fh.write(row + "\n")


def export_geometry_csv(path, reference_design: geomod.DesignVector, final_design: geomod.DesignVector, config: RunConfig):
    """Boundary overlay of the reference and optimized airfoils."""
    ref_curve = geomod.sample_boundary(reference_design, config.cst, config.grid.i_max)
    fin_curve = geomod.sample_boundary(final_design, config.cst, config.grid.i_max)
    with open(path, "w") as fh:
        fh.write("i,x_ref,y_ref,x_opt,y_opt\n")
        for i in range(config.grid.i_max):
            fh.write(
                f"{i + 1},{ref_curve.x[i]:.17g},{ref_curve.y[i]:.17g},"
                f"{fin_curve.x[i]:.17g},{fin_curve.y[i]:.17g}\n"
            )
