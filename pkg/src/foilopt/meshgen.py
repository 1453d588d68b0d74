"""Body-fitted O-grid generation: parabolic march plus elliptic smoothing.

Grids are stored on the unique circumferential stations (the trailing-edge
seam appears once); file exports duplicate the seam row so headers carry the
conventional odd point count.  Index i wraps periodically, j runs from the
airfoil (j=0) to the far-field circle (j=NJ-1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dualnum as dn
from .errors import ConvergenceError, MeshValidityError
from .geometry import BoundaryCurve
from .linsolve import solve_periodic_tridiagonal, solve_tridiagonal

# bound on the ratio of the implicit-xi to the level-anchoring coefficient in
# the parabolic march (smoothing length <= ~3 stations)
_XI_SMOOTHING_CAP = 16.0


@dataclass(frozen=True)
class FarFieldSpec:
    """Far-field circle and the radial stretching of the initial grid."""

    center_x: float = 0.5
    radius: float = 12.0
    stretch_ratio: float = 1.08

    def __post_init__(self):
        if self.radius <= 1.0:
            raise ValueError("far-field radius must exceed the chord")


@dataclass(frozen=True)
class SmootherParams:
    """Geometric alpha cycle and relaxation for the elliptic ADI smoother."""

    alpha_lo: float = 0.003
    alpha_hi: float = 30.0
    cycle_length: int = 12
    omega: float = 1.0
    tol: float = 1e-8
    max_iters: int = 20000
    # keep iterating toward tol*target_factor while progress holds
    target_factor: float = 1e-4


@dataclass
class Grid:
    """Structured O-mesh on unique stations: x, y of shape (NI, NJ)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.shape != self.y.shape or self.x.ndim != 2:
            raise ValueError("x and y must be 2-D arrays of equal shape")

    @property
    def ni(self) -> int:
        return self.x.shape[0]

    @property
    def nj(self) -> int:
        return self.x.shape[1]

    @property
    def i_max(self) -> int:
        """Point count including the duplicated trailing-edge seam."""
        return self.ni + 1

    def closed(self):
        """Arrays with the seam row repeated, shape (i_max, NJ)."""
        return (
            np.vstack([self.x, self.x[:1]]),
            np.vstack([self.y, self.y[:1]]),
        )

    def copy(self) -> "Grid":
        return Grid(self.x.copy(), self.y.copy())


@dataclass
class ValidityReport:
    min_jacobian: float
    crossing_cells: int
    wall_conforms: bool
    farfield_conforms: bool

    @property
    def is_valid(self) -> bool:
        return self.min_jacobian > 0.0 and self.crossing_cells == 0


# ---- differences and coefficients -----------------------------------------


def _dxi(r):
    # centered, periodic in i
    return (dn.roll(r, -1, axis=0) - dn.roll(r, 1, axis=0)) * 0.5


def _deta_interior(r):
    # centered in j on interior columns, shape (NI, NJ-2)
    return (r[:, 2:] - r[:, :-2]) * 0.5


def grid_coefficient_fields(x, y):
    """Metric combinations A, B, C, D at interior points, shape (NI, NJ-2)."""
    x_xi = _dxi(x)[:, 1:-1]
    y_xi = _dxi(y)[:, 1:-1]
    x_eta = _deta_interior(x)
    y_eta = _deta_interior(y)
    a = x_eta**2 + y_eta**2
    b = x_xi * x_eta + y_xi * y_eta
    c = x_xi**2 + y_xi**2
    d = (x_xi * y_eta - x_eta * y_xi) ** 2
    return a, b, c, d


def grid_coefficients(grid: Grid, i: int, j: int):
    """Pointwise (A, B, C, D) at interior node (i, j), 0-based indices."""
    if not 1 <= j <= grid.nj - 2:
        raise ValueError("coefficients are defined at interior j only")
    a, b, c, d = grid_coefficient_fields(grid.x, grid.y)
    return a[i % grid.ni, j - 1], b[i % grid.ni, j - 1], c[i % grid.ni, j - 1], d[i % grid.ni, j - 1]


def _second_differences(r):
    """(delta_xixi, delta_etaeta, delta_xieta) on interior columns."""
    d_xixi = (dn.roll(r, -1, axis=0) - 2.0 * r + dn.roll(r, 1, axis=0))[:, 1:-1]
    d_etaeta = r[:, 2:] - 2.0 * r[:, 1:-1] + r[:, :-2]
    rp = dn.roll(r, -1, axis=0)
    rm = dn.roll(r, 1, axis=0)
    d_xieta = ((rp[:, 2:] - rp[:, :-2]) - (rm[:, 2:] - rm[:, :-2])) * 0.25
    return d_xixi, d_etaeta, d_xieta


def mesh_residual_fields(x, y):
    """Laplace-grid residual L(x), L(y) at interior points, (NI, NJ-2).

    L(r) = A d_xixi r - 2 B d_xieta r + C d_etaeta r with centered
    second-order differences and zero control functions.
    """
    a, b, c, _ = grid_coefficient_fields(x, y)
    lx = _assemble_l(x, a, b, c)
    ly = _assemble_l(y, a, b, c)
    return lx, ly


def _assemble_l(r, a, b, c):
    d_xixi, d_etaeta, d_xieta = _second_differences(r)
    return a * d_xixi - 2.0 * (b * d_xieta) + c * d_etaeta


def mesh_residual(grid: Grid):
    """Residual padded with zero boundary rows, shape (NI, NJ) each."""
    lx_i, ly_i = mesh_residual_fields(grid.x, grid.y)
    lx = np.zeros_like(grid.x)
    ly = np.zeros_like(grid.y)
    lx[:, 1:-1] = lx_i
    ly[:, 1:-1] = ly_i
    return lx, ly


def mesh_residual_norm(grid: Grid) -> float:
    lx, ly = mesh_residual_fields(grid.x, grid.y)
    return max(np.abs(lx).max(), np.abs(ly).max())


# ---- initial grid ----------------------------------------------------------


def radial_fractions(nj: int, ratio: float) -> np.ndarray:
    """Normalized radial positions with geometrically stretched spacing."""
    if nj < 2:
        raise ValueError("need at least two radial levels")
    if abs(ratio - 1.0) < 1e-14:
        return np.linspace(0.0, 1.0, nj)
    steps = ratio ** np.arange(nj - 1)
    t = np.concatenate([[0.0], np.cumsum(steps)])
    return t / t[-1]


def farfield_points(curve: BoundaryCurve, spec: FarFieldSpec):
    """Outer-circle points at angles tied to the chordwise stations.

    The angle distribution depends only on the stretched stations, not on
    the airfoil ordinates, so the outer boundary is design-independent and
    mirror-symmetric.  The loop starts at the trailing edge (angle 0) and
    runs clockwise, matching the lower-TE-first boundary ordering.
    """
    ih = curve.i_half
    chi = curve.chi[: curve.i_max - 1]
    theta = np.empty(curve.i_max - 1)
    theta[:ih] = -np.pi * (1.0 - chi[:ih])
    theta[ih:] = -np.pi - np.pi * chi[ih:]
    x = spec.center_x + spec.radius * np.cos(theta)
    y = spec.radius * np.sin(theta)
    return np.stack([x, y], axis=-1)


def parabolic_march(curve: BoundaryCurve, farfield: FarFieldSpec, j_max: int) -> Grid:
    """March level by level from the airfoil to the far-field circle.

    Each new level solves one periodic tridiagonal system per coordinate;
    terms from the not-yet-computed outer level are taken from a local
    reference grid stretched between the current front and the circle.
    """
    if j_max < 2:
        raise ValueError("j_max must be at least 2")
    b = curve.points[:-1]  # unique stations, seam dropped
    f = farfield_points(curve, farfield)
    ni = b.shape[0]

    x = np.zeros((ni, j_max))
    y = np.zeros((ni, j_max))
    x[:, 0], y[:, 0] = b[:, 0], b[:, 1]
    x[:, -1], y[:, -1] = f[:, 0], f[:, 1]
    if j_max == 2:
        return Grid(x, y)

    t = radial_fractions(j_max, farfield.stretch_ratio)
    for j in range(1, j_max - 1):
        front = np.stack([x[:, j - 1], y[:, j - 1]], axis=-1)
        # local reference levels between the front and the outer circle
        s_j = (t[j] - t[j - 1]) / (1.0 - t[j - 1])
        s_jp = (t[min(j + 1, j_max - 1)] - t[j - 1]) / (1.0 - t[j - 1])
        ref_j = front + s_j * (f - front)
        ref_jp = front + s_jp * (f - front) if j + 1 < j_max - 1 else f

        r_xi = (np.roll(ref_j, -1, axis=0) - np.roll(ref_j, 1, axis=0)) * 0.5
        r_eta = (ref_jp - front) * 0.5
        a = r_eta[:, 0] ** 2 + r_eta[:, 1] ** 2
        bb = r_xi[:, 0] * r_eta[:, 0] + r_xi[:, 1] * r_eta[:, 1]
        c = r_xi[:, 0] ** 2 + r_xi[:, 1] ** 2
        # where surface clustering makes cells extremely anisotropic the
        # implicit xi coupling would smear the level over dozens of
        # stations and collapse it onto the body; capping A keeps the
        # smoothing length at a few stations while the elliptic stage
        # restores the full operator
        a_eff = np.minimum(a, _XI_SMOOTHING_CAP * c)

        cross = (
            np.roll(ref_jp, -1, axis=0)
            - np.roll(front, -1, axis=0)
            - np.roll(ref_jp, 1, axis=0)
            + np.roll(front, 1, axis=0)
        ) * 0.25
        d_xixi_ref = np.roll(ref_j, -1, axis=0) - 2.0 * ref_j + np.roll(ref_j, 1, axis=0)
        defect = (
            a_eff[:, None] * d_xixi_ref
            - 2.0 * bb[:, None] * cross
            + c[:, None] * (ref_jp - 2.0 * ref_j + front)
        )
        # solve the level equation for the deviation from the reference:
        # A_eff d_xixi delta - 2 C delta = -defect
        delta = solve_periodic_tridiagonal(
            -a_eff[:, None],
            2.0 * (a_eff + c)[:, None],
            -a_eff[:, None],
            defect,
        )
        x[:, j] = ref_j[:, 0] + delta[:, 0]
        y[:, j] = ref_j[:, 1] + delta[:, 1]
    return Grid(x, y)


# ---- elliptic smoothing ----------------------------------------------------


def alpha_cycle(params: SmootherParams) -> np.ndarray:
    return np.geomspace(params.alpha_hi, params.alpha_lo, params.cycle_length)


def elliptic_smooth(grid: Grid, params: SmootherParams | None = None):
    """ADI iteration for the Laplace grid; returns (grid, info dict).

    One iteration factors (alpha - A d_xixi)(alpha - C d_etaeta) applied to
    the correction: periodic tridiagonal solves along xi, then tridiagonal
    solves along eta, for x and y simultaneously.
    """
    params = params or SmootherParams()
    cycle = alpha_cycle(params)
    x = grid.x.copy()
    y = grid.y.copy()
    ni, nj = x.shape
    history = []

    best = None
    res_best = np.inf
    # internal target floored at the double-precision residual floor
    tol_target = max(params.tol * params.target_factor, 1e-12)
    for it in range(params.max_iters + 1):
        a, b, c, _ = grid_coefficient_fields(x, y)
        lx = _assemble_l(x, a, b, c)
        ly = _assemble_l(y, a, b, c)
        res = max(np.abs(lx).max(), np.abs(ly).max())
        history.append(res)
        if res <= params.tol and res < res_best:
            res_best = res
            best = (x.copy(), y.copy())
        # the tolerance is an upper bound: keep pushing toward the internal
        # target while progress holds, then return the best iterate
        window = 3 * params.cycle_length
        stalled = len(history) > 2 * window and min(history[-window:]) > 0.97 * min(
            history[-2 * window : -window]
        )
        if best is not None and (res_best <= tol_target or stalled or it == params.max_iters):
            return Grid(best[0], best[1]), {"iterations": it, "residual": res_best, "history": history}
        if it == params.max_iters:
            break
        if len(history) > 4 * params.cycle_length and res > 1e6 * min(history):
            raise ConvergenceError("elliptic smoothing diverged", history)

        alpha = cycle[it % len(cycle)]
        rhs = np.stack([lx, ly], axis=-1) * (alpha * params.omega)

        # step 1: (alpha - A d_xixi) f = alpha omega L, lines of constant j
        f = solve_periodic_tridiagonal(-a[:, :, None], alpha + 2.0 * a[:, :, None], -a[:, :, None], rhs)

        # step 2: (alpha - C d_etaeta) dr = f, lines of constant i, Dirichlet ends
        c_t = np.transpose(c, (1, 0))[:, :, None]
        f_t = np.transpose(f, (1, 0, 2))
        dr = solve_tridiagonal(-c_t, alpha + 2.0 * c_t, -c_t, f_t)
        dr = np.transpose(dr, (1, 0, 2))

        x[:, 1:-1] += dr[:, :, 0]
        y[:, 1:-1] += dr[:, :, 1]

        if it % 50 == 0 and _min_forward_jacobian(x, y) <= 0.0:
            raise MeshValidityError("Jacobian sign flip during elliptic smoothing")

    raise ConvergenceError(
        f"elliptic smoothing did not reach tol={params.tol} in {params.max_iters} iterations",
        history,
    )


# ---- metrics for the flow solver -------------------------------------------


@dataclass
class FlowMetrics:
    """Inverse-map metric combinations at every node."""

    a1: object
    a2: object
    a3: object
    jac: object  # J = 1/(x_xi y_eta - x_eta y_xi)
    det: object  # forward-map determinant 1/J


def _deta_full(r):
    """Centered eta-derivative, second-order one-sided at j=0 and j=NJ-1."""
    inner = _deta_interior(r)
    lo = (-3.0 * r[:, :1] + 4.0 * r[:, 1:2] - r[:, 2:3]) * 0.5
    hi = (3.0 * r[:, -1:] - 4.0 * r[:, -2:-1] + r[:, -3:-2]) * 0.5
    return _concat_cols(lo, inner, hi)


def _concat_cols(*parts):
    if any(isinstance(p, dn.Dual) for p in parts):
        k = next(p.ndirs for p in parts if isinstance(p, dn.Dual))
        parts = [p if isinstance(p, dn.Dual) else dn.Dual.constant(p, k) for p in parts]
        return dn.Dual(
            np.concatenate([p.val for p in parts], axis=1),
            np.concatenate([p.dot for p in parts], axis=1),
        )
    return np.concatenate(parts, axis=1)


def flow_metrics(x, y, strict: bool = True) -> FlowMetrics:
    """Metrics A1, A2, A3 and Jacobian of the inverse map at all nodes."""
    x_xi = _dxi(x)
    y_xi = _dxi(y)
    x_eta = _deta_full(x)
    y_eta = _deta_full(y)
    det = x_xi * y_eta - x_eta * y_xi
    det_v = dn.value(det)
    if strict and det_v.min() <= 0.0:
        raise MeshValidityError(
            f"nonpositive cell Jacobian (min {det_v.min():.3e}); grid is invalid"
        )
    jac = 1.0 / det
    j2 = jac * jac
    a1 = (x_eta**2 + y_eta**2) * j2
    a2 = -(x_xi * x_eta + y_xi * y_eta) * j2
    a3 = (x_xi**2 + y_xi**2) * j2
    return FlowMetrics(a1=a1, a2=a2, a3=a3, jac=jac, det=det)


def _min_forward_jacobian(x, y) -> float:
    x_xi = _dxi(x)
    y_xi = _dxi(y)
    x_eta = _deta_full(x)
    y_eta = _deta_full(y)
    return float(np.min(dn.value(x_xi * y_eta - x_eta * y_xi)))


def check_validity(grid: Grid, boundary: BoundaryCurve | None = None, farfield: FarFieldSpec | None = None) -> ValidityReport:
    """Diagnostic report: minimum Jacobian, crossed cells, boundary conformity."""
    min_jac = _min_forward_jacobian(grid.x, grid.y)

    xc, yc = grid.closed()
    ax = xc[1:, :-1] - xc[:-1, :-1]
    ay = yc[1:, :-1] - yc[:-1, :-1]
    bx = xc[:-1, 1:] - xc[:-1, :-1]
    by = yc[:-1, 1:] - yc[:-1, :-1]
    cx = xc[1:, 1:] - xc[1:, :-1]
    cy = yc[1:, 1:] - yc[1:, :-1]
    dx = xc[1:, 1:] - xc[:-1, 1:]
    dy = yc[1:, 1:] - yc[:-1, 1:]
    t1 = ax * by - ay * bx
    t2 = ax * cy - ay * cx
    t3 = dx * by - dy * bx
    t4 = dx * cy - dy * cx
    crossing = int(np.sum((t1 <= 0) | (t2 <= 0) | (t3 <= 0) | (t4 <= 0)))

    wall_ok = True
    if boundary is not None:
        wall_ok = bool(
            np.allclose(grid.x[:, 0], boundary.x[:-1], atol=1e-12)
            and np.allclose(grid.y[:, 0], boundary.y[:-1], atol=1e-12)
        )
    far_ok = True
    if farfield is not None:
        r = np.hypot(grid.x[:, -1] - farfield.center_x, grid.y[:, -1])
        far_ok = bool(np.max(np.abs(r - farfield.radius)) < 1e-9 * farfield.radius)
    return ValidityReport(
        min_jacobian=min_jac,
        crossing_cells=crossing,
        wall_conforms=wall_ok,
        farfield_conforms=far_ok,
    )


# ---- grid file I/O ---------------------------------------------------------


def save_grid(path, grid: Grid):
    """Plain-text format: header 'I_max J_max' then rows 'i j x y' (1-based)."""
    xc, yc = grid.closed()
    with open(path, "w") as fh:
        fh.write(f"{grid.i_max} {grid.nj}\n")
        for i in range(grid.i_max):
            for j in range(grid.nj):
                fh.write(f"{i + 1} {j + 1} {xc[i, j]:.17g} {yc[i, j]:.17g}\n")


def load_grid(path) -> Grid:
    with open(path) as fh:
        i_max, nj = (int(tok) for tok in fh.readline().split())
        data = np.loadtxt(fh)
    x = data[:, 2].reshape(i_max, nj)
    y = data[:, 3].reshape(i_max, nj)
    return Grid(x[:-1], y[:-1])


def save_mesh_csv(path, grid: Grid):
    xc, yc = grid.closed()
    with open(path, "w") as fh:
        fh.write("i,j,x,y\n")
        for i in range(grid.i_max):
            for j in range(grid.nj):
                fh.write(f"{i + 1},{j + 1},{xc[i, j]:.17g},{yc[i, j]:.17g}\n")
