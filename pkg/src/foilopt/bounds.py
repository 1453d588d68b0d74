"""Error propagation from inexact state/adjoint solves to reduced gradients.

Everything here targets residuals affine in the state, R(z, y) = A(z) y -
b(z), where the admissible-state and admissible-adjoint sets are ellipsoids
and every propagation constant has a closed form or an exact dense
evaluation.  A built-in synthetic family makes the inequalities auditable
sample by sample: state error, adjoint error, reduced-gradient error, and
the directional tolerance rule that caps the relative gradient error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SingularSystemError


@dataclass
class AffineFamily:
    """Residual family A(z) y - b(z) with per-component matrix derivatives.

    ``a_of``, ``b_of`` evaluate the coefficients; ``da_of(k)``/``db_of()``
    return the (constant or z-dependent) derivatives.  The synthetic
    builder below supplies closed-form regularity constants.
    """

    m: int
    n: int
    a_of: callable
    b_of: callable
    da_of: callable  # da_of(z, k) -> (n, n)
    db_of: callable  # db_of(z) -> (n, m)
    c_a: float = None  # sup_k ||dA/dz_k||_2
    c_b: float = None  # sup ||db/dz||_2

    def residual(self, z, y):
        return self.a_of(z) @ y - self.b_of(z)

    def drdz(self, z, y):
        """Columnwise [dA/dz_k y] - db/dz, shape (n, m)."""
        cols = np.stack([self.da_of(z, k) @ y for k in range(self.m)], axis=1)
        return cols - self.db_of(z)


@dataclass
class QuadraticObjective:
    """F(z, y) = 1/2 y^T Q y + c^T y + y^T M z with closed-form constants."""

    q: np.ndarray
    c: np.ndarray
    m_cross: np.ndarray

    def value(self, z, y):
        return 0.5 * y @ self.q @ y + self.c @ y + y @ self.m_cross @ z

    def grad_y(self, z, y):
        return self.q @ y + self.c + self.m_cross @ z

    def grad_z(self, z, y):
        return self.m_cross.T @ y

    @property
    def lipschitz(self) -> float:
        """Spectral norm of the full Hessian in (z, y)."""
        n, m = self.m_cross.shape
        hess = np.zeros((m + n, m + n))
        hess[:m, m:] = self.m_cross.T
        hess[m:, :m] = self.m_cross
        hess[m:, m:] = self.q
        return float(np.linalg.norm(hess, 2))

    def sup_grad_y_norm(self, z, y_star, radius):
        """Upper bound of ||grad_y F|| over the state ball of given radius."""
        center = np.linalg.norm(self.grad_y(z, y_star))
        return center + float(np.linalg.norm(self.q, 2)) * radius


@dataclass
class BoundConstants:
    """Pointwise and uniform error-propagation constants."""

    c_r: float
    c_y: float
    m_f: float
    c_a: float
    c_b: float
    l_f: float
    d_r: float
    d_psi: float

    @staticmethod
    def supremum(items):
        """Componentwise maxima: uniform (overbar) constants over a sample."""
        if not items:
            raise ValueError("empty sample")
        get = lambda name: max(getattr(it, name) for it in items)
        c_r, c_y, m_f = get("c_r"), get("c_y"), get("m_f")
        c_a, c_b, l_f = get("c_a"), get("c_b"), get("l_f")
        d_psi = (np.sqrt(items[0]._m) * c_a * c_y + c_b) * c_r
        d_r = l_f * c_r + l_f * (np.sqrt(items[0]._m) * c_a * c_y + c_b) * c_r**2 + np.sqrt(items[0]._m) * c_a * m_f * c_r**2
        out = BoundConstants(c_r=c_r, c_y=c_y, m_f=m_f, c_a=c_a, c_b=c_b, l_f=l_f, d_r=d_r, d_psi=d_psi)
        out._m = items[0]._m
        return out

    _m: int = field(default=0, repr=False)


@dataclass(frozen=True)
class ToleranceSpec:
    """Directional tolerance parameters: tau = gamma * ||inexact gradient||."""

    zeta: float
    omega: float
    gamma1: float
    gamma2: float

    def __post_init__(self):
        if not 0.0 < self.omega < 1.0:
            raise ValueError("omega must lie in (0, 1)")
        if self.zeta <= 0 or self.gamma1 <= 0 or self.gamma2 <= 0:
            raise ValueError("zeta and gammas must be positive")


def make_synthetic_family(m=4, n=8, eps=0.05, seed=0) -> tuple[AffineFamily, QuadraticObjective]:
    """A(z) = I + eps sum z_k S_k with fixed random symmetric S_k, b affine.

    eps is small enough to keep A invertible on the unit box; all
    regularity constants are closed-form (the S_k and B are constant, so
    the Lipschitz constants of the derivatives vanish).
    """
    rng = np.random.default_rng(seed)
    s_mats = []
    for _ in range(m):
        s = rng.standard_normal((n, n))
        s = 0.5 * (s + s.T)
        s /= np.linalg.norm(s, 2)  # unit spectral norm
        s_mats.append(s)
    b_mat = rng.standard_normal((n, m)) / np.sqrt(m)
    b0 = rng.standard_normal(n)

    def a_of(z):
        a = np.eye(n).copy()
        for k in range(m):
            a += eps * z[k] * s_mats[k]
        return a

    family = AffineFamily(
        m=m,
        n=n,
        a_of=a_of,
        b_of=lambda z: b0 + b_mat @ z,
        da_of=lambda z, k: eps * s_mats[k],
        db_of=lambda z: b_mat,
        c_a=eps,
        c_b=float(np.linalg.norm(b_mat, 2)),
    )

    q = rng.standard_normal((n, n))
    q = 0.5 * (q + q.T) + n * np.eye(n)
    q /= np.linalg.norm(q, 2)
    objective = QuadraticObjective(
        q=q, c=rng.standard_normal(n) / np.sqrt(n), m_cross=rng.standard_normal((n, m)) / np.sqrt(m * n)
    )
    return family, objective


# ---- states, adjoints, gradients --------------------------------------------


def exact_state(family: AffineFamily, z):
    a = family.a_of(z)
    try:
        return np.linalg.solve(a, family.b_of(z))
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from exc


def perturbed_state(family: AffineFamily, z, tau_r, seed=0):
    """y with ||A y - b||_2 = tau_r exactly, along a seeded unit residual."""
    y_star = exact_state(family, z)
    if tau_r == 0.0:
        return y_star
    r = _unit_vector(family.n, seed)
    return y_star + np.linalg.solve(family.a_of(z), tau_r * r)


def exact_adjoint(family: AffineFamily, objective, z, y):
    """Adjoint of the state y: A(z)^T psi = grad_y F(z, y)."""
    return np.linalg.solve(family.a_of(z).T, objective.grad_y(z, y))


def perturbed_adjoint(family: AffineFamily, objective, z, y, tau_psi, seed=0):
    """psi with adjoint residual exactly tau_psi about the state y."""
    psi_star = exact_adjoint(family, objective, z, y)
    if tau_psi == 0.0:
        return psi_star
    r = _unit_vector(family.n, seed + 101)
    return psi_star + np.linalg.solve(family.a_of(z).T, tau_psi * r)


def inexact_gradient(family: AffineFamily, objective, z, y, psi):
    """grad_z F(z, y) - [dR/dz|_(z,y)]^T psi."""
    return objective.grad_z(z, y) - family.drdz(z, y).T @ psi


def exact_gradient(family: AffineFamily, objective, z):
    y_star = exact_state(family, z)
    psi_star = exact_adjoint(family, objective, z, y_star)
    return inexact_gradient(family, objective, z, y_star, psi_star)


def _unit_vector(n, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


# ---- bounds -----------------------------------------------------------------


def state_radius(family: AffineFamily, z) -> float:
    """C_R(z) = ||A(z)^{-1}||_2 by dense SVD."""
    return float(np.linalg.norm(np.linalg.inv(family.a_of(z)), 2))


def state_error_bound(family: AffineFamily, z, tau_r) -> float:
    return state_radius(family, z) * tau_r


def adjoint_error_bound(family: AffineFamily, objective, z, tau_r, tau_psi) -> float:
    c_r = state_radius(family, z)
    return c_r**2 * objective.lipschitz * tau_r + c_r * tau_psi


def pointwise_constants(family: AffineFamily, objective, z, tau_r) -> BoundConstants:
    """All constants of the pointwise reduced-gradient error bound at z."""
    c_r = state_radius(family, z)
    y_star = exact_state(family, z)
    c_y = float(np.linalg.norm(y_star)) + c_r * tau_r
    m_f = objective.sup_grad_y_norm(z, y_star, c_r * tau_r)
    l_f = objective.lipschitz
    c_a, c_b = family.c_a, family.c_b
    sm = np.sqrt(family.m)
    d_psi = (sm * c_a * c_y + c_b) * c_r
    d_r = l_f * c_r + l_f * (sm * c_a * c_y + c_b) * c_r**2 + sm * c_a * m_f * c_r**2
    out = BoundConstants(c_r=c_r, c_y=c_y, m_f=m_f, c_a=c_a, c_b=c_b, l_f=l_f, d_r=d_r, d_psi=d_psi)
    out._m = family.m
    return out


def gradient_error_bound(family: AffineFamily, objective, z, tau_r, tau_psi):
    """(D_R, D_psi, bound) of the pointwise reduced-gradient estimate."""
    k = pointwise_constants(family, objective, z, tau_r)
    return k.d_r, k.d_psi, k.d_r * tau_r + k.d_psi * tau_psi


def uniform_constants(family: AffineFamily, objective, z_samples, tau_r) -> BoundConstants:
    """Overbar constants: maxima of the pointwise ones over a compact sample."""
    items = [pointwise_constants(family, objective, z, tau_r) for z in z_samples]
    return BoundConstants.supremum(items)


def directional_tolerances(zeta, omega, d_r_bar, d_psi_bar, g_bar_norm):
    """Maximal admissible (tau_R, tau_psi) for a relative error level zeta.

    gamma1 = omega zeta / D_R and gamma2 = (1-omega) zeta / D_psi, so
    D_R gamma1 + D_psi gamma2 <= zeta by construction.
    """
    if zeta <= 0 or not 0.0 < omega < 1.0:
        raise ValueError("need zeta > 0 and omega in (0, 1)")
    if d_r_bar <= 0 or d_psi_bar <= 0:
        raise ValueError("propagation constants must be positive")
    if g_bar_norm < 0:
        raise ValueError("gradient norm must be nonnegative")
    gamma1 = omega * zeta / d_r_bar
    gamma2 = (1.0 - omega) * zeta / d_psi_bar
    return gamma1 * g_bar_norm, gamma2 * g_bar_norm


def consistent_directional_sample(family, objective, z, zeta, omega, constants, seed=0, iters=40):
    """Fixed point of tau = gamma ||inexact gradient(tau)|| with frozen directions.

    Returns (tau_r, tau_psi, g_bar, g_exact); the premise of the
    directional rule holds exactly at the returned sample.  The supplied
    uniform constants are promoted if the pointwise ones at the realized
    tolerance exceed them (the overbar constants must dominate pointwise).
    """
    g_exact = exact_gradient(family, objective, z)
    g_norm = float(np.linalg.norm(g_exact))
    if g_norm == 0.0:
        return 0.0, 0.0, g_exact.copy(), g_exact

    for _ in range(6):
        tau_r, tau_psi = directional_tolerances(zeta, omega, constants.d_r, constants.d_psi, g_norm)
        g_bar = g_exact
        for _ in range(iters):
            y = perturbed_state(family, z, tau_r, seed=seed)
            psi = perturbed_adjoint(family, objective, z, y, tau_psi, seed=seed)
            g_bar = inexact_gradient(family, objective, z, y, psi)
            tau_r_new, tau_psi_new = directional_tolerances(
                zeta, omega, constants.d_r, constants.d_psi, np.linalg.norm(g_bar)
            )
            if abs(tau_r_new - tau_r) <= 1e-14 * max(tau_r, 1e-300) and abs(
                tau_psi_new - tau_psi
            ) <= 1e-14 * max(tau_psi, 1e-300):
                tau_r, tau_psi = tau_r_new, tau_psi_new
                break
            tau_r, tau_psi = tau_r_new, tau_psi_new
        ptw = pointwise_constants(family, objective, z, tau_r)
        if ptw.d_r <= constants.d_r and ptw.d_psi <= constants.d_psi:
            break
        constants = BoundConstants.supremum([constants, ptw])
    return tau_r, tau_psi, g_bar, g_exact


# ---- sampling audit ----------------------------------------------------------


@dataclass
class AuditRow:
    sample: int
    kind: str
    measured: float
    bound: float

    @property
    def slack(self) -> float:
        return self.bound - self.measured

    @property
    def violated(self) -> bool:
        return self.measured > self.bound * (1.0 + 1e-12) + 1e-15


def run_audit(family, objective, n_samples=1000, zeta=0.25, omega=0.5, seed=0, tau_scale=0.1):
    """Sample (z, tau, directions) and audit every inequality of the theory.

    Returns a list of AuditRow, four rows per sample: state error, adjoint
    error, gradient error, and the directional consequence.
    """
    rng = np.random.default_rng(seed)
    rows = []
    z_box = rng.uniform(-1.0, 1.0, (max(n_samples // 10, 2), family.m))
    uni = uniform_constants(family, objective, z_box, tau_scale)

    for sidx in range(n_samples):
        z = rng.uniform(-1.0, 1.0, family.m)
        tau_r = tau_scale * rng.uniform(0.01, 1.0)
        tau_psi = tau_scale * rng.uniform(0.01, 1.0)
        sseed = int(rng.integers(0, 2**31))

        y_star = exact_state(family, z)
        y = perturbed_state(family, z, tau_r, seed=sseed)
        rows.append(
            AuditRow(sidx, "state", float(np.linalg.norm(y - y_star)), state_error_bound(family, z, tau_r))
        )

        psi_star = exact_adjoint(family, objective, z, y_star)
        psi = perturbed_adjoint(family, objective, z, y, tau_psi, seed=sseed)
        rows.append(
            AuditRow(
                sidx,
                "adjoint",
                float(np.linalg.norm(psi - psi_star)),
                adjoint_error_bound(family, objective, z, tau_r, tau_psi),
            )
        )

        g_bar = inexact_gradient(family, objective, z, y, psi)
        g_exact = inexact_gradient(family, objective, z, y_star, psi_star)
        _, _, bound = gradient_error_bound(family, objective, z, tau_r, tau_psi)
        rows.append(AuditRow(sidx, "gradient", float(np.linalg.norm(g_bar - g_exact)), bound))

        tau_r_d, tau_psi_d, g_bar_d, g_exact_d = consistent_directional_sample(
            family, objective, z, zeta, omega, uni, seed=sseed
        )
        rows.append(
            AuditRow(
                sidx,
                "directional",
                float(np.linalg.norm(g_bar_d - g_exact_d)),
                zeta * float(np.linalg.norm(g_bar_d)),
            )
        )
    return rows


def save_audit_csv(path, rows):
    with open(path, "w") as fh:
        fh.write("sample,kind,measured,bound,slack\n")
        for r in rows:
            fh.write(f"{r.sample},{r.kind},{r.measured:.17g},{r.bound:.17g},{r.slack:.17g}\n")
