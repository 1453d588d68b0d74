"""Conservative full-potential discretization and the AF2 iteration.

The residual is a backward difference of upwind-stabilized face fluxes:
artificial density blends the face density toward its upstream neighbor
wherever the switching function is active.  The nonlinear equation is
relaxed by an approximate factorization into an eta-bidiagonal and a
xi-periodic-tridiagonal factor.

All residual kernels accept either plain arrays or ``dualnum.Dual`` fields,
so the adjoint module can differentiate exactly the code paths used by the
primal solve.  Branch decisions (upwind directions, switching-function
activation) are taken from ``FrozenSwitches`` when supplied.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dualnum as dn
from .errors import ConvergenceError, NonphysicalStateError
from .linsolve import solve_lower_bidiagonal, solve_periodic_tridiagonal
from .meshgen import FlowMetrics, Grid, _deta_full, _dxi, flow_metrics


@dataclass(frozen=True)
class FreestreamSpec:
    """Freestream Mach number, angle of attack (radians), heat-capacity ratio."""

    mach: float = 0.7
    alpha_aoa: float = 0.0
    gamma: float = 1.4

    def __post_init__(self):
        if not 0.0 < self.mach < 1.0:
            raise ValueError("subsonic/transonic freestream requires 0 < M < 1")
        if self.gamma <= 1.0:
            raise ValueError("gamma must exceed 1")


@dataclass(frozen=True)
class Af2Params:
    """Alpha cycle, relaxation, damping bounds, and switching gain."""

    alpha_lo: float = 0.5
    alpha_hi: float = 50.0
    cycle_length: int = 8
    omega: float = 1.0
    beta_subsonic: float = 0.15
    beta_lo: float = 0.05
    beta_hi: float = 1.0
    kappa: float = 2.0
    tol: float = 1e-8
    max_iters: int = 20000
    divergence_factor: float = 10.0
    # pseudo-time transient guard: corrections clipped to this fraction of
    # the freestream speed (inactive at the fixed point, where C -> 0)
    correction_cap: float = 0.05
    # keep iterating toward tol*target_factor while progress holds, so the
    # returned state has margin below the contracted tolerance
    target_factor: float = 1e-4

    def __post_init__(self):
        if not self.beta_lo <= self.beta_subsonic <= self.beta_hi:
            raise ValueError("beta_subsonic must lie within [beta_lo, beta_hi]")


@dataclass
class FlowState:
    """Velocity potential on the grid plus convergence bookkeeping."""

    phi: np.ndarray
    freestream: FreestreamSpec
    converged: bool = False
    residual: float = np.inf
    iterations: int = 0
    history: list = field(default_factory=list, repr=False)


@dataclass
class FrozenSwitches:
    """Primal branch decisions held fixed during differentiation."""

    u_pos: np.ndarray  # xi-face contravariant velocity > 0
    v_pos: np.ndarray  # eta-face contravariant velocity > 0
    nu_xi_on: np.ndarray
    nu_xi_cap: np.ndarray
    nu_eta_on: np.ndarray
    nu_eta_cap: np.ndarray


def freestream_velocity(fs: FreestreamSpec) -> float:
    """Nondimensional speed ((gamma+1)/(gamma-1+2/M^2))^(1/2); 1 at M=1."""
    return ((fs.gamma + 1.0) / (fs.gamma - 1.0 + 2.0 / fs.mach**2)) ** 0.5


def farfield_potential(x, y, fs: FreestreamSpec):
    u_inf = freestream_velocity(fs)
    return u_inf * (x * np.cos(fs.alpha_aoa) + y * np.sin(fs.alpha_aoa))


def freestream_density(fs: FreestreamSpec) -> float:
    u_inf = freestream_velocity(fs)
    return density_from_speed_sq(u_inf**2, fs.gamma)


def density_from_speed_sq(q2, gamma):
    """Isentropic density from the squared physical speed; no guard."""
    bracket = 1.0 - (gamma - 1.0) / (gamma + 1.0) * q2
    return bracket ** (1.0 / (gamma - 1.0))


def density(u, v, phi_xi, phi_eta, gamma):
    """rho = [1 - (gamma-1)/(gamma+1) (U phi_xi + V phi_eta)]^(1/(gamma-1))."""
    q2 = u * phi_xi + v * phi_eta
    bracket = 1.0 - (gamma - 1.0) / (gamma + 1.0) * np.asarray(q2)
    if np.any(bracket <= 1e-12):
        loc = np.unravel_index(int(np.argmin(bracket)), np.shape(bracket)) if np.ndim(bracket) else ()
        raise NonphysicalStateError(
            f"density bracket nonpositive (min {np.min(bracket):.3e})", location=loc
        )
    return bracket ** (1.0 / (gamma - 1.0))


def sonic_density(gamma: float) -> float:
    """C1 = (2/(gamma+1))^(1/(gamma-1)), the density at sonic speed."""
    return (2.0 / (gamma + 1.0)) ** (1.0 / (gamma - 1.0))


def switching_nu(rho, kappa, gamma):
    """nu = max(0, (C1 - rho) kappa), clipped to [0, 1]."""
    c1 = sonic_density(gamma)
    return np.clip((c1 - np.asarray(rho, dtype=float)) * kappa, 0.0, 1.0)


def _phi_derivatives(phi, metrics, wall_tangency=True):
    """Nodal phi_xi and phi_eta.

    On the wall row the one-sided eta stencil is badly conditioned where the
    grid pinches at the trailing edge, so with ``wall_tangency`` the flow
    tangency condition V = A2 phi_xi + A3 phi_eta = 0 defines phi_eta there
    instead: phi_eta|_wall = -(A2/A3) phi_xi.
    """
    phi_xi = _dxi(phi)
    phi_eta = _deta_full(phi)
    if wall_tangency:
        wall = -(metrics.a2[:, :1] / metrics.a3[:, :1]) * phi_xi[:, :1]
        phi_eta = _replace_wall_col(phi_eta, wall)
    return phi_xi, phi_eta


def contravariant_velocities(phi, metrics: FlowMetrics, wall_tangency=True):
    """Nodal contravariant components U = A1 phi_xi + A2 phi_eta and V."""
    phi_xi, phi_eta = _phi_derivatives(phi, metrics, wall_tangency)
    u = metrics.a1 * phi_xi + metrics.a2 * phi_eta
    v = metrics.a2 * phi_xi + metrics.a3 * phi_eta
    return u, v, phi_xi, phi_eta


def physical_velocities(phi, x, y, metrics: FlowMetrics, wall_tangency=True):
    """v_x = xi_x phi_xi + eta_x phi_eta and v_y, at every node.

    With ``wall_tangency`` the wall-row velocity is the tangential
    projection v = phi_xi (x_xi, y_xi) / (x_xi^2 + y_xi^2), which is what
    the metric formula reduces to under V = 0 but without the cancellation
    of near-singular metric products.
    """
    phi_xi, phi_eta = _phi_derivatives(phi, metrics, wall_tangency)
    x_xi = _dxi(x)
    y_xi = _dxi(y)
    x_eta = _deta_full(x)
    y_eta = _deta_full(y)
    jac = metrics.jac
    xi_x = jac * y_eta
    xi_y = -jac * x_eta
    eta_x = -jac * y_xi
    eta_y = jac * x_xi
    vx = xi_x * phi_xi + eta_x * phi_eta
    vy = xi_y * phi_xi + eta_y * phi_eta
    if wall_tangency:
        c_wall = x_xi[:, :1] ** 2 + y_xi[:, :1] ** 2
        vt = phi_xi[:, :1] / c_wall
        vx = _replace_wall_col(vx, vt * x_xi[:, :1])
        vy = _replace_wall_col(vy, vt * y_xi[:, :1])
    return vx, vy, phi_xi, phi_eta


def _replace_wall_col(field, col):
    if isinstance(field, dn.Dual) or isinstance(col, dn.Dual):
        k = field.ndirs if isinstance(field, dn.Dual) else col.ndirs
        field = field if isinstance(field, dn.Dual) else dn.Dual.constant(field, k)
        col = col if isinstance(col, dn.Dual) else dn.Dual.constant(col, k)
        return dn.Dual(
            np.concatenate([col.val, field.val[:, 1:]], axis=1),
            np.concatenate([col.dot, field.dot[:, 1:]], axis=1),
        )
    return np.concatenate([col, field[:, 1:]], axis=1)


def _nodal_density(phi, x, y, metrics, gamma, check=True):
    """Nodal isentropic density from the physical speed.

    ``check=True`` raises on a nonpositive bracket; ``check=False`` clamps
    the bracket at a small floor, which only matters during pseudo-time
    transients (the clamp is verified inactive at convergence).
    """
    vx, vy, phi_xi, phi_eta = physical_velocities(phi, x, y, metrics)
    q2 = vx * vx + vy * vy
    bracket = 1.0 - (gamma - 1.0) / (gamma + 1.0) * q2
    bracket_v = dn.value(bracket)
    if np.any(bracket_v <= 1e-12):
        if check:
            loc = np.unravel_index(int(np.argmin(bracket_v)), bracket_v.shape)
            raise NonphysicalStateError(
                f"density bracket nonpositive (min {bracket_v.min():.3e}) at node {loc}",
                location=loc,
            )
        bracket = dn.where(bracket_v <= 1e-6, 1e-6 + 0.0 * bracket, bracket)
    rho = bracket ** (1.0 / (gamma - 1.0))
    return rho, phi_xi, phi_eta


def _avg_i(a):
    """Node pair average onto xi faces (i+1/2): (a_i + a_{i+1})/2."""
    return (a + dn.roll(a, -1, axis=0)) * 0.5


def artificial_density(rho_face, rho_shift_fwd, rho_shift_bwd, rho_up, pos_mask, kappa, gamma, on_mask=None, cap_mask=None):
    """Upwind-biased face density: blend toward the upstream face value.

    ``pos_mask`` selects flow direction (+ means toward increasing index, so
    the upstream face lies backward).  Branch masks may be frozen externally.
    """
    c1 = sonic_density(gamma)
    nu_raw = (c1 - rho_up) * kappa
    nu_val = dn.value(nu_raw)
    if on_mask is None:
        on_mask = nu_val > 0.0
    if cap_mask is None:
        cap_mask = nu_val > 1.0
    nu = dn.where(on_mask, nu_raw, 0.0 * nu_raw)
    nu = dn.where(cap_mask, 1.0 + 0.0 * nu_raw, nu)
    rho_upstream_face = dn.where(pos_mask, rho_shift_bwd, rho_shift_fwd)
    return (1.0 - nu) * rho_face + nu * rho_upstream_face, nu


class _FaceData:
    """Face fluxes and coefficients shared by the residual and AF2 operator."""

    __slots__ = (
        "flux_xi",
        "flux_eta",
        "coef_xi",
        "coef_eta",
        "u_face",
        "v_face",
        "nu_xi",
        "nu_eta",
        "switches",
        "rho",
    )


def _face_data(phi, x, y, metrics, fs: FreestreamSpec, kappa, frozen: FrozenSwitches | None = None, check=True):
    """Everything living on cell faces for rows j = 0..NJ-2."""
    gamma = fs.gamma
    rho, phi_xi, phi_eta = _nodal_density(phi, x, y, metrics, gamma, check=check)

    g1 = metrics.a1 * metrics.det  # A1 / J
    g2 = metrics.a2 * metrics.det
    g3 = metrics.a3 * metrics.det

    nja = dn.value(phi).shape[1] - 1

    # xi faces (i+1/2, j), j = 0..NJ-2
    sl = (slice(None), slice(0, nja))
    phi_xi_f = (dn.roll(phi, -1, axis=0) - phi)[sl]
    phi_eta_f = _avg_i(phi_eta)[sl]
    u_face = _avg_i(g1)[sl] * phi_xi_f + _avg_i(g2)[sl] * phi_eta_f  # U/J at face
    rho_face_xi = _avg_i(rho)[sl]
    u_pos = frozen.u_pos if frozen is not None else dn.value(u_face) > 0.0
    rho_up_xi = dn.where(u_pos, rho[sl], dn.roll(rho, -1, axis=0)[sl])
    rho_tilde, nu_xi = artificial_density(
        rho_face_xi,
        dn.roll(rho_face_xi, -1, axis=0),
        dn.roll(rho_face_xi, 1, axis=0),
        rho_up_xi,
        u_pos,
        kappa,
        gamma,
        on_mask=frozen.nu_xi_on if frozen is not None else None,
        cap_mask=frozen.nu_xi_cap if frozen is not None else None,
    )
    flux_xi = rho_tilde * u_face
    coef_xi = rho_tilde * _avg_i(g1)[sl]  # (rho~ A1 / J) at xi faces

    # eta faces (i, j+1/2), j = 0..NJ-2 (face 0 sits between rows 0 and 1)
    phi_eta_fe = phi[:, 1:] - phi[:, :-1]
    phi_xi_fe = (phi_xi[:, 1:] + phi_xi[:, :-1]) * 0.5
    g2f = (g2[:, 1:] + g2[:, :-1]) * 0.5
    g3f = (g3[:, 1:] + g3[:, :-1]) * 0.5
    v_face = g2f * phi_xi_fe + g3f * phi_eta_fe  # V/J at face
    rho_face_eta = (rho[:, 1:] + rho[:, :-1]) * 0.5
    v_pos = frozen.v_pos if frozen is not None else dn.value(v_face) > 0.0
    rho_up_eta = dn.where(v_pos, rho[:, :-1], rho[:, 1:])
    # shifted faces, clamped at the wall and far-field edges
    rho_shift_fwd = _shift_cols(rho_face_eta, -1)
    rho_shift_bwd = _shift_cols(rho_face_eta, 1)
    rho_bar, nu_eta = artificial_density(
        rho_face_eta,
        rho_shift_fwd,
        rho_shift_bwd,
        rho_up_eta,
        v_pos,
        kappa,
        gamma,
        on_mask=frozen.nu_eta_on if frozen is not None else None,
        cap_mask=frozen.nu_eta_cap if frozen is not None else None,
    )
    flux_eta = rho_bar * v_face
    coef_eta = rho_bar * g3f  # (rho- A3 / J) at eta faces

    fd = _FaceData()
    fd.flux_xi = flux_xi
    fd.flux_eta = flux_eta
    fd.coef_xi = coef_xi
    fd.coef_eta = coef_eta
    fd.u_face = u_face
    fd.v_face = v_face
    fd.nu_xi = nu_xi
    fd.nu_eta = nu_eta
    fd.rho = rho
    fd.switches = FrozenSwitches(
        u_pos=u_pos,
        v_pos=v_pos,
        nu_xi_on=frozen.nu_xi_on if frozen is not None else dn.value((sonic_density(gamma) - rho_up_xi) * kappa) > 0.0,
        nu_xi_cap=frozen.nu_xi_cap if frozen is not None else dn.value((sonic_density(gamma) - rho_up_xi) * kappa) > 1.0,
        nu_eta_on=frozen.nu_eta_on if frozen is not None else dn.value((sonic_density(gamma) - rho_up_eta) * kappa) > 0.0,
        nu_eta_cap=frozen.nu_eta_cap if frozen is not None else dn.value((sonic_density(gamma) - rho_up_eta) * kappa) > 1.0,
    )
    return fd


def _shift_cols(a, shift):
    """Shift along j with edge clamping (used for the eta upwind face)."""
    if isinstance(a, dn.Dual):
        return dn.Dual(_shift_cols(a.val, shift), _shift_cols(a.dot, shift))
    out = np.empty_like(a)
    if shift == 1:  # value at j-1, clamp at the wall face
        out[:, 1:] = a[:, :-1]
        out[:, 0] = a[:, 0]
    else:  # value at j+1, clamp at the outer face
        out[:, :-1] = a[:, 1:]
        out[:, -1] = a[:, -1]
    return out


def flow_residual(phi, x, y, metrics, fs: FreestreamSpec, kappa, frozen=None, check=True):
    """L(phi) on active rows j = 0..NJ-2; wall face flux is identically zero."""
    fd = _face_data(phi, x, y, metrics, fs, kappa, frozen=frozen, check=check)
    l_xi = fd.flux_xi - dn.roll(fd.flux_xi, 1, axis=0)
    # eta part: row 0 gets flux_eta[:, 0] - 0 (wall tangency)
    fe = fd.flux_eta
    if isinstance(fe, dn.Dual):
        upper = fe[:, 1:] - fe[:, :-1]
        l_eta = dn.Dual(
            np.concatenate([fe.val[:, :1], upper.val], axis=1),
            np.concatenate([fe.dot[:, :1], upper.dot], axis=1),
        )
    else:
        l_eta = np.concatenate([fe[:, :1], fe[:, 1:] - fe[:, :-1]], axis=1)
    return l_xi + l_eta


def residual_norm(l_field) -> float:
    return float(np.abs(dn.value(l_field)).max())


def _residual_from_faces(fd: _FaceData):
    l_xi = fd.flux_xi - dn.roll(fd.flux_xi, 1, axis=0)
    l_eta = np.concatenate([fd.flux_eta[:, :1], np.diff(fd.flux_eta, axis=1)], axis=1)
    return l_xi + l_eta


def af2_iterate(phi, x, y, metrics, fs, params: Af2Params, alpha, beta, check=True, fd=None):
    """One AF2 correction: returns (phi_next, residual_field, face data)."""
    if fd is None:
        fd = _face_data(phi, x, y, metrics, fs, params.kappa, check=check)
    l_field = _residual_from_faces(fd)

    ni, nja = l_field.shape

    # step 1: (alpha - forward-delta_eta A_j) f = alpha omega L
    # upper bidiagonal in j; wall face coefficient is zero
    g_lo = np.concatenate([np.zeros((ni, 1)), fd.coef_eta[:, :-1]], axis=1)  # face j-1/2
    g_hi = fd.coef_eta  # face j+1/2
    rhs = (alpha * params.omega) * l_field
    diag_rev = (alpha + g_lo)[:, ::-1].T
    sub_rev = (-g_hi[:, ::-1]).T[1:, :]
    f = solve_lower_bidiagonal(diag_rev, sub_rev, rhs[:, ::-1].T)[::-1, :].T

    # step 2: sweep j upward; periodic tridiagonal in i with upwind damping
    u_node_pos = (fd.u_face + np.roll(fd.u_face, 1, axis=0)) > 0.0
    a_plus = fd.coef_xi  # face i+1/2
    a_minus = np.roll(fd.coef_xi, 1, axis=0)  # face i-1/2
    c = np.zeros_like(l_field)
    c_prev = np.zeros(ni)
    ab = alpha * beta
    for j in range(nja):
        diag = alpha + a_plus[:, j] + a_minus[:, j] + ab
        sup = -a_plus[:, j] - np.where(~u_node_pos[:, j], ab, 0.0)
        sub = -a_minus[:, j] - np.where(u_node_pos[:, j], ab, 0.0)
        rhs_j = f[:, j] + alpha * c_prev
        c[:, j] = solve_periodic_tridiagonal(sub, diag, sup, rhs_j)
        c_prev = c[:, j]

    cap = params.correction_cap * freestream_velocity(fs)
    np.clip(c, -cap, cap, out=c)
    phi_next = phi.copy()
    phi_next[:, :nja] += c
    return phi_next, l_field, fd


def solve_flow(grid: Grid, fs: FreestreamSpec, params: Af2Params | None = None, phi0=None) -> FlowState:
    """Drive max|L(phi)| below tol with cycled AF2 corrections."""
    params = params or Af2Params()
    metrics = flow_metrics(grid.x, grid.y)  # raises on invalid grid
    phi = phi0.copy() if phi0 is not None else farfield_potential(grid.x, grid.y, fs)
    # Dirichlet far-field row is always exact
    phi[:, -1] = farfield_potential(grid.x[:, -1], grid.y[:, -1], fs)

    cycle = np.geomspace(params.alpha_hi, params.alpha_lo, params.cycle_length)
    beta = params.beta_subsonic
    history = []
    best = np.inf
    state = FlowState(phi=phi, freestream=fs)

    phi_best = None
    res_best = np.inf
    # internal target floored at the double-precision residual floor
    tol_target = max(params.tol * params.target_factor, 1e-12)
    for it in range(params.max_iters + 1):
        fd = _face_data(phi, grid.x, grid.y, metrics, fs, params.kappa, check=False)
        res = residual_norm(_residual_from_faces(fd))
        history.append(res)
        if res <= params.tol and res < res_best:
            res_best = res
            phi_best = phi.copy()
        # the tolerance is an upper bound: keep pushing toward the internal
        # target while the residual still improves, then return the best
        window = 3 * params.cycle_length
        stalled = len(history) > 2 * window and min(history[-window:]) > 0.97 * min(
            history[-2 * window : -window]
        )
        if phi_best is not None and (res_best <= tol_target or stalled or it == params.max_iters):
            phi = phi_best
            # strict re-evaluation: the transient clamp must be inactive here
            res = residual_norm(flow_residual(phi, grid.x, grid.y, metrics, fs, params.kappa, check=True))
            state.phi = phi
            state.converged = True
            state.residual = res
            state.iterations = it
            state.history = history
            return state
        if it == params.max_iters:
            break
        best = min(best, res)
        if len(history) > 3 * params.cycle_length and res > params.divergence_factor * best:
            raise ConvergenceError(f"AF2 diverged at iteration {it} (res {res:.3e})", history)

        alpha = cycle[it % params.cycle_length]
        phi, l_field, fd = af2_iterate(phi, grid.x, grid.y, metrics, fs, params, alpha, beta, check=False, fd=fd)

        supersonic = bool(np.any(fd.nu_xi > 0.0) or np.any(fd.nu_eta > 0.0))
        if supersonic:
            if len(history) >= 2 and history[-1] > history[-2]:
                beta = min(beta * 1.05, params.beta_hi)
            else:
                beta = max(beta * 0.98, params.beta_lo)
        else:
            beta = params.beta_subsonic

    raise ConvergenceError(
        f"AF2 did not reach tol={params.tol} within {params.max_iters} iterations "
        f"(final residual {history[-1]:.3e})",
        history,
    )


# ---- post-processing -------------------------------------------------------


def pressure_field(phi, x, y, metrics, fs: FreestreamSpec):
    """(rho, Cp, v_x, v_y) at every node from the converged potential."""
    gamma = fs.gamma
    vx, vy, _, _ = physical_velocities(phi, x, y, metrics)
    q2 = vx * vx + vy * vy
    bracket = 1.0 - (gamma - 1.0) / (gamma + 1.0) * q2
    rho = bracket ** (1.0 / (gamma - 1.0))
    p = (gamma + 1.0) / (2.0 * gamma) * rho**gamma
    rho_inf = freestream_density(fs)
    p_inf = (gamma + 1.0) / (2.0 * gamma) * rho_inf**gamma
    u_inf = freestream_velocity(fs)
    cp = (p - p_inf) / (0.5 * rho_inf * u_inf**2)
    return rho, cp, vx, vy


def surface_cp(state_or_phi, grid_or_xy, fs: FreestreamSpec, metrics=None):
    """Cp at the wall stations (j = 0), one value per unique station.

    Under the tangency condition the wall velocity is purely tangential,
    v = phi_xi (x_xi, y_xi) / |r_xi|^2, so Cp depends only on wall-row
    quantities (which also keeps the design Jacobians local to the wall).
    """
    phi = state_or_phi.phi if isinstance(state_or_phi, FlowState) else state_or_phi
    if isinstance(grid_or_xy, Grid):
        x, y = grid_or_xy.x, grid_or_xy.y
    else:
        x, y = grid_or_xy
    gamma = fs.gamma
    phi_xi = _dxi(phi[:, :1])
    x_xi = _dxi(x[:, :1])
    y_xi = _dxi(y[:, :1])
    c_wall = x_xi * x_xi + y_xi * y_xi
    q2 = phi_xi * phi_xi / c_wall
    bracket = 1.0 - (gamma - 1.0) / (gamma + 1.0) * q2
    rho = bracket ** (1.0 / (gamma - 1.0))
    p = (gamma + 1.0) / (2.0 * gamma) * rho**gamma
    rho_inf = freestream_density(fs)
    p_inf = (gamma + 1.0) / (2.0 * gamma) * rho_inf**gamma
    u_inf = freestream_velocity(fs)
    cp = (p - p_inf) / (0.5 * rho_inf * u_inf**2)
    return cp[:, 0]


def upper_surface_stations(ni: int) -> np.ndarray:
    """Unique station indices from the upper TE node to the LE node."""
    i_half = ni // 2 + 1
    return np.concatenate([[0], np.arange(ni - 1, i_half - 2, -1)]).astype(int)


def mirror_station(i, ni):
    return (ni - np.asarray(i)) % ni
