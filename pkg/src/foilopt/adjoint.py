"""Coupled discrete adjoints of the mesh and flow residuals.

Jacobians are assembled by forward-mode dual numbers threaded through the
same residual kernels as the primal solves, with sparsity coloring to keep
the number of seed directions at the stencil size rather than the DOF
count.  Upwind branches and the switching-function max are frozen at their
primal converged values, so the assembled matrices are the exact one-sided
Jacobians of the piecewise-smooth residuals.

Active DOF layout:
  flow state u     : phi at (i, j) for j = 0..NJ-2      (far field Dirichlet)
  mesh state q     : x, y at (i, j) for j = 0..NJ-2     (wall row included)
Mesh residual rows pair 1:1 with q: Dirichlet identity rows q_wall - b(z)
on the wall row, elliptic Laplace-grid rows on the interior.  With the wall
row carried in q, the objective has no explicit design dependence and the
reduced gradient is exactly -[dRm/dz]^T lambda_m.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import dualnum as dn
from . import flow as flowmod
from . import geometry as geomod
from .errors import SingularSystemError
from .meshgen import Grid, flow_metrics, mesh_residual_fields


@dataclass(frozen=True)
class ActiveIndexMap:
    """Bijections between grid positions and flat active-DOF indices."""

    ni: int
    nj: int

    @property
    def n_active_rows(self) -> int:
        return self.nj - 1  # j = 0..NJ-2

    @property
    def n_u(self) -> int:
        return self.ni * self.n_active_rows

    @property
    def n_q(self) -> int:
        return 2 * self.ni * self.n_active_rows

    def u_index(self, i, j):
        return j * self.ni + i

    def q_index(self, i, j, coord):
        return (j * self.ni + i) * 2 + coord


@dataclass
class AdjointSystem:
    """Assembled Jacobians and objective partials at a converged state."""

    rf_u: sp.csr_matrix
    rf_q: sp.csr_matrix
    rm_q: sp.csr_matrix
    rm_z: np.ndarray
    dj_du: np.ndarray
    dj_dq: np.ndarray
    dj_dz: np.ndarray
    index_map: ActiveIndexMap


@dataclass
class AdjointPair:
    lam_flow: np.ndarray
    lam_mesh: np.ndarray
    flow_residual: float
    mesh_residual: float


def _color_period(n_periodic: int, min_period: int) -> int:
    """Smallest divisor of the periodic extent >= min_period."""
    for p in range(min_period, n_periodic + 1):
        if n_periodic % p == 0:
            return p
    return n_periodic


def _colored_seed(shape_active, ni, p_i, p_j, ncomp=1):
    """Index sets grouping active DOFs by stencil color."""
    nja = shape_active
    colors = p_i * p_j * ncomp
    sets = [[] for _ in range(colors)]
    for j in range(nja):
        for i in range(ni):
            for c in range(ncomp):
                col = ((i % p_i) * p_j + (j % p_j)) * ncomp + c
                sets[col].append((j * ni + i) * ncomp + c)
    return sets


def _extract_colored(dot, rows_ij, ni, nja, p_i, p_j, reach, ncomp, n_cols):
    """Scatter colored directional derivatives into a sparse Jacobian.

    ``dot`` has shape (n_rows, colors); entry for column (i+di, j+dj, c)
    of row (i, j) is read from the column's color.  The color periods
    exceed twice the stencil reach, so no two admissible columns share a
    color within one row's stencil box.
    """
    ii, jj = rows_ij
    n_rows = dot.shape[0]
    rows_out = []
    cols_out = []
    vals_out = []
    row_flat = np.arange(n_rows)
    for di in range(-reach, reach + 1):
        ci = (ii + di) % ni
        for dj in range(-reach, reach + 1):
            cj = jj + dj
            ok = (cj >= 0) & (cj < nja)
            if not np.any(ok):
                continue
            for c in range(ncomp):
                color = ((ci % p_i) * p_j + (cj % p_j)) * ncomp + c
                vals = dot[row_flat[ok], color[ok]]
                nz = vals != 0.0
                if not np.any(nz):
                    continue
                rows_out.append(row_flat[ok][nz])
                cols_out.append(((cj[ok] * ni + ci[ok]) * ncomp + c)[nz])
                vals_out.append(vals[nz])
    rows_cat = np.concatenate(rows_out) if rows_out else np.zeros(0, int)
    cols_cat = np.concatenate(cols_out) if cols_out else np.zeros(0, int)
    vals_cat = np.concatenate(vals_out) if vals_out else np.zeros(0)
    return sp.coo_matrix((vals_cat, (rows_cat, cols_cat)), shape=(n_rows, n_cols)).tocsr()


_REACH = 3  # flow residual stencil half-width (shifted upwind faces)
_REACH_MESH = 1  # mesh residual touches (i +- 1, j +- 1) only


def _row_grids(ni, nja):
    rows_i, rows_j = np.meshgrid(np.arange(ni), np.arange(nja), indexing="ij")
    return rows_i.T.ravel(), rows_j.T.ravel()  # row-major over j then i


def assemble_rf_u(phi, x, y, metrics, fs, kappa, frozen) -> sp.csr_matrix:
    """Flow-residual Jacobian wrt the active potential DOFs."""
    ni = x.shape[0]
    nja = x.shape[1] - 1
    p_i = _color_period(ni, 2 * _REACH + 1)
    p_j = min(2 * _REACH + 1, nja)
    phi_dual = _seed_field(phi, ni, nja, p_i, p_j)
    r_dual = flowmod.flow_residual(phi_dual, x, y, metrics, fs, kappa, frozen=frozen)
    dot = np.transpose(r_dual.dot, (1, 0, 2)).reshape(ni * nja, -1)
    return _extract_colored(dot, _row_grids(ni, nja), ni, nja, p_i, p_j, _REACH, 1, ni * nja)


def assemble_rm_interior(x, y) -> sp.csr_matrix:
    """Jacobian of the elliptic rows wrt the interior coordinates only.

    Ordering: DOF ((j - 1) * ni + i) * 2 + coord over j = 1..NJ-2, matching
    the residual rows; used by the warm-start Newton polish.
    """
    ni, nj = x.shape
    n_int = nj - 2
    p_i = _color_period(ni, 2 * _REACH_MESH + 1)
    p_j = min(2 * _REACH_MESH + 1, n_int)
    colors = p_i * p_j * 2
    dot_x = np.zeros((ni, nj, colors))
    dot_y = np.zeros((ni, nj, colors))
    jj = np.arange(1, nj - 1)
    for i in range(ni):
        base = ((i % p_i) * p_j + ((jj - 1) % p_j)) * 2
        dot_x[i, jj, base] = 1.0
        dot_y[i, jj, base + 1] = 1.0
    lx, ly = mesh_residual_fields(dn.Dual(x, dot_x), dn.Dual(y, dot_y))
    n_rows = 2 * ni * n_int
    dot_m = np.zeros((n_rows, colors))
    lx_dot = np.transpose(lx.dot, (1, 0, 2))  # (n_int, ni, colors)
    ly_dot = np.transpose(ly.dot, (1, 0, 2))
    for j in range(n_int):
        base = (j * ni) * 2
        dot_m[base : base + 2 * ni : 2] = lx_dot[j]
        dot_m[base + 1 : base + 2 * ni : 2] = ly_dot[j]
    rows_i = np.repeat(np.tile(np.arange(ni), n_int), 2)
    rows_j = np.repeat(np.arange(n_int), ni * 2)
    return _extract_colored(dot_m, (rows_i, rows_j), ni, n_int, p_i, p_j, _REACH_MESH, 2, n_rows)


def _seed_field(values, ni, nja, p_i, p_j):
    """Dual field over the full (ni, nj) array, active rows color-seeded."""
    nj = values.shape[1]
    colors = p_i * p_j
    dot = np.zeros((ni, nj, colors))
    jj = np.arange(nja)
    for i in range(ni):
        dot[i, jj, (i % p_i) * p_j + (jj % p_j)] = 1.0
    return dn.Dual(values, dot)


def _seed_xy(x, y, ni, nja, p_i, p_j):
    """Dual x and y with interleaved coordinate colors."""
    nj = x.shape[1]
    colors = p_i * p_j * 2
    dot_x = np.zeros((ni, nj, colors))
    dot_y = np.zeros((ni, nj, colors))
    jj = np.arange(nja)
    for i in range(ni):
        base = ((i % p_i) * p_j + (jj % p_j)) * 2
        dot_x[i, jj, base] = 1.0
        dot_y[i, jj, base + 1] = 1.0
    return dn.Dual(x, dot_x), dn.Dual(y, dot_y)


def assemble_jacobians(
    design: geomod.DesignVector,
    cst: geomod.CstConfig,
    grid: Grid,
    state: flowmod.FlowState,
    kappa: float,
    objective_fn,
    mesh_tol: float = 1e-8,
    flow_tol: float = 1e-8,
) -> AdjointSystem:
    """Assemble all four residual Jacobians and the objective partials.

    ``objective_fn(cp_wall)`` maps the wall-Cp vector (plain or Dual) to the
    scalar objective.  Assembly is rejected unless the mesh and flow
    residuals are converged at the supplied state.
    """
    from .meshgen import mesh_residual_norm

    fs = state.freestream
    x, y = grid.x, grid.y
    ni, nj = x.shape
    idx = ActiveIndexMap(ni=ni, nj=nj)
    nja = idx.n_active_rows

    mres = mesh_residual_norm(grid)
    metrics = flow_metrics(x, y)
    l_flow = flowmod.flow_residual(state.phi, x, y, metrics, fs, kappa)
    fres = flowmod.residual_norm(l_flow)
    if mres > 10.0 * mesh_tol or fres > 10.0 * flow_tol:
        raise ValueError(
            f"Jacobian assembly at a non-converged state (mesh {mres:.2e}, flow {fres:.2e})"
        )

    frozen = flowmod._face_data(state.phi, x, y, metrics, fs, kappa).switches

    rf_u = assemble_rf_u(state.phi, x, y, metrics, fs, kappa, frozen)

    # dRf/dq
    rows_i, rows_j = _row_grids(ni, nja)
    p_i = _color_period(ni, 2 * _REACH + 1)
    p_j = min(2 * _REACH + 1, nja)
    x_dual, y_dual = _seed_xy(x, y, ni, nja, p_i, p_j)
    metrics_dual = flow_metrics(x_dual, y_dual)
    r_dual = flowmod.flow_residual(state.phi, x_dual, y_dual, metrics_dual, fs, kappa, frozen=frozen)
    dot = np.transpose(r_dual.dot, (1, 0, 2)).reshape(idx.n_u, -1)
    rf_q = _extract_colored(dot, (rows_i, rows_j), ni, nja, p_i, p_j, _REACH, 2, idx.n_q)

    # dRm/dq: elliptic rows at j = 1..NJ-2 plus wall identity rows
    p_im = _color_period(ni, 2 * _REACH_MESH + 1)
    p_jm = min(2 * _REACH_MESH + 1, nja)
    x_dual, y_dual = _seed_xy(x, y, ni, nja, p_im, p_jm)
    lx_dual, ly_dual = mesh_residual_fields(x_dual, y_dual)
    # rows ordered like q: (j*ni + i)*2 + coord, j = 0 are identity rows
    n_colors = p_im * p_jm * 2
    dot_m = np.zeros((idx.n_q, n_colors))
    lx_dot = np.transpose(lx_dual.dot, (1, 0, 2))  # (nj-2, ni, colors)
    ly_dot = np.transpose(ly_dual.dot, (1, 0, 2))
    for j in range(1, nja):
        base = (j * ni) * 2
        dot_m[base + 0 : base + 2 * ni : 2] = lx_dot[j - 1]
        dot_m[base + 1 : base + 2 * ni : 2] = ly_dot[j - 1]
    rows_iq = np.repeat(np.tile(np.arange(ni), nja), 2)
    rows_jq = np.repeat(np.arange(nja), ni * 2)
    rm_q = _extract_colored(dot_m, (rows_iq, rows_jq), ni, nja, p_im, p_jm, _REACH_MESH, 2, idx.n_q)
    eye_wall = sp.coo_matrix(
        (np.ones(2 * ni), (np.arange(2 * ni), np.arange(2 * ni))), shape=(idx.n_q, idx.n_q)
    ).tocsr()
    rm_q = (rm_q + eye_wall).tocsr()

    # dRm/dz: identity rows carry -db/dz from the CST sampler
    nz = design.upper.size + design.lower.size
    coeff_dual = dn.seed(design.flatten(), [[k] for k in range(nz)])
    upper_d = coeff_dual[: design.upper.size]
    lower_d = coeff_dual[design.upper.size :]
    _, yb, _ = geomod._boundary_arrays(upper_d, lower_d, cst, grid.i_max)
    rm_z = np.zeros((idx.n_q, nz))
    rm_z[1 : 2 * ni : 2, :] = -yb.dot[:-1]  # y rows; x stations are design-independent

    # objective partials by chunked identity seeding
    dj_du = _objective_partial_u(state.phi, x, y, metrics, fs, idx, objective_fn)
    dj_dq = _objective_partial_q(state.phi, x, y, fs, idx, objective_fn)
    dj_dz = np.zeros(nz)

    return AdjointSystem(
        rf_u=rf_u,
        rf_q=rf_q,
        rm_q=rm_q,
        rm_z=rm_z,
        dj_du=dj_du,
        dj_dq=dj_dq,
        dj_dz=dj_dz,
        index_map=idx,
    )


def _objective_partial_u(phi, x, y, metrics, fs, idx, objective_fn):
    """dJ/du: the wall Cp depends only on the wall row of phi."""
    grad = np.zeros(idx.n_u)
    nj = phi.shape[1]
    sets = [[i * nj + 0] for i in range(idx.ni)]
    phi_dual = dn.seed(phi, sets)
    val = objective_fn(flowmod.surface_cp(phi_dual, (x, y), fs, metrics=metrics))
    grad[: idx.ni] = val.dot  # u-index of (i, j=0) is i
    return grad


def _objective_partial_q(phi, x, y, fs, idx, objective_fn):
    """dJ/dq: only the wall coordinate DOFs enter the wall Cp."""
    grad = np.zeros(idx.n_q)
    nj = x.shape[1]
    sets_x = [[i * nj + 0] if c == 0 else [] for i in range(idx.ni) for c in range(2)]
    sets_y = [[i * nj + 0] if c == 1 else [] for i in range(idx.ni) for c in range(2)]
    x_dual = dn.seed(x, sets_x)
    y_dual = dn.seed(y, sets_y)
    val = objective_fn(flowmod.surface_cp(phi, (x_dual, y_dual), fs))
    grad[: 2 * idx.ni] = val.dot  # q-index of (i, j=0, c) is 2 i + c
    return grad


# ---- linear solves ----------------------------------------------------------


def _transpose_solve(a, rhs, tol, max_refine=12):
    """Solve A^T x = rhs to an absolute 2-norm residual <= tol."""
    rhs = np.asarray(rhs, dtype=float)
    if sp.issparse(a):
        lu = spla.splu(a.tocsc())
        x = lu.solve(rhs, trans="T")
        for _ in range(max_refine):
            r = rhs - a.T @ x
            if np.linalg.norm(r) <= tol:
                return x
            x = x + lu.solve(r, trans="T")
        r = rhs - a.T @ x
    else:
        a = np.asarray(a, dtype=float)
        x = np.linalg.solve(a.T, rhs)
        for _ in range(max_refine):
            r = rhs - a.T @ x
            if np.linalg.norm(r) <= tol:
                return x
            x = x + np.linalg.solve(a.T, r)
        r = rhs - a.T @ x
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("adjoint solve produced non-finite values")
    raise SingularSystemError(
        f"adjoint refinement stalled at residual {np.linalg.norm(r):.3e} (tol {tol:.1e})"
    )


def solve_flow_adjoint(rf_u, dj_du, tol=1e-10):
    """[dRf/du]^T lam_f = [dJ/du]^T, solved to the requested residual."""
    return _transpose_solve(rf_u, dj_du, tol)


def solve_mesh_adjoint(rm_q, dj_dq, rf_q, lam_f, tol=1e-10):
    """[dRm/dq]^T lam_m = [dJ/dq]^T - [dRf/dq]^T lam_f."""
    rhs = np.asarray(dj_dq, dtype=float) - rf_q.T @ np.asarray(lam_f, dtype=float)
    return _transpose_solve(rm_q, rhs, tol)


def reduced_gradient(z, lam_m, rm_z, dj_dz=None):
    """Reduced design gradient [dJ/dz]^T - [dRm/dz]^T lam_m."""
    z = np.asarray(z, dtype=float)
    head = np.zeros(z.size) if dj_dz is None else np.asarray(dj_dz, dtype=float)
    return head - np.asarray(rm_z).T @ np.asarray(lam_m)


def solve_adjoints(system: AdjointSystem, tol=1e-10) -> AdjointPair:
    lam_f = solve_flow_adjoint(system.rf_u, system.dj_du, tol)
    lam_m = solve_mesh_adjoint(system.rm_q, system.dj_dq, system.rf_q, lam_f, tol)
    res_f = float(np.linalg.norm(system.rf_u.T @ lam_f - system.dj_du))
    res_m = float(
        np.linalg.norm(system.rm_q.T @ lam_m - (system.dj_dq - system.rf_q.T @ lam_f))
    )
    return AdjointPair(lam_flow=lam_f, lam_mesh=lam_m, flow_residual=res_f, mesh_residual=res_m)
