"""Analytic airfoil profiles, CST parametrization, and boundary sampling.

The airfoil surface is a class function times a Bernstein polynomial in the
chordwise coordinate chi, one coefficient set per surface.  Boundary points
for the O-grid are sampled at sigmoid-stretched chordwise stations that
cluster near the leading and trailing edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from . import dualnum as dn


@dataclass(frozen=True)
class CstConfig:
    """Shape order, class exponents, chord, TE offsets, and stretching."""

    order: int = 5
    n1: float = 0.5
    n2: float = 1.0
    chord: float = 1.0
    delta_upper: float = 0.0
    delta_lower: float = 0.0
    x0: float = 0.0
    sharpness: float = 12.0

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("shape order must be >= 1")
        if self.chord <= 0 or self.n1 <= 0 or self.n2 <= 0:
            raise ValueError("chord and class exponents must be positive")


@dataclass
class DesignVector:
    """Signed Bernstein coefficients of the upper and lower surfaces."""

    upper: np.ndarray
    lower: np.ndarray

    def __post_init__(self):
        self.upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        self.lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        if self.upper.shape != self.lower.shape:
            raise ValueError("upper and lower coefficient counts differ")

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.upper, self.lower])

    @classmethod
    def from_flat(cls, z) -> "DesignVector":
        z = np.asarray(z, dtype=float)
        if z.size % 2 != 0:
            raise ValueError("flattened design vector must have even length")
        half = z.size // 2
        return cls(z[:half].copy(), z[half:].copy())

    def is_symmetric(self, tol=0.0) -> bool:
        return bool(np.all(np.abs(self.lower + self.upper) <= tol))


@dataclass
class BoundaryCurve:
    """Closed airfoil boundary: lower TE -> LE -> upper TE, seam at the TE.

    ``points`` has ``i_max`` rows; the first and last coincide at the
    trailing edge.  ``chi`` holds the chordwise station of each point.
    """

    points: np.ndarray
    i_max: int
    chi: np.ndarray = field(repr=False, default=None)

    @property
    def i_half(self) -> int:
        return (self.i_max + 1) // 2

    @property
    def x(self):
        return self.points[:, 0]

    @property
    def y(self):
        return self.points[:, 1]


def class_function(chi, n1, n2):
    """chi**n1 * (1 - chi)**n2; zero at both endpoints for positive exponents."""
    chi_a = np.asarray(chi, dtype=float)
    if np.any(chi_a < 0.0) or np.any(chi_a > 1.0):
        raise ValueError("chi outside [0, 1]")
    return chi_a**n1 * (1.0 - chi_a) ** n2


def bernstein_shape(chi, coeffs):
    """Bernstein combination sum_k a_k C(n,k) chi^k (1-chi)^(n-k).

    ``coeffs`` may be a plain array or a Dual (for design derivatives);
    ``chi`` is always plain.
    """
    chi_a = np.asarray(chi, dtype=float)
    n = (coeffs.shape[-1] if isinstance(coeffs, dn.Dual) else len(coeffs)) - 1
    if n < 0:
        raise ValueError("empty coefficient vector")
    out = None
    for k in range(n + 1):
        basis = comb(n, k) * chi_a**k * (1.0 - chi_a) ** (n - k)
        term = coeffs[k] * basis
        out = term if out is None else out + term
    return out


def cst_surface(chi, coeffs, delta, config: CstConfig):
    """Nondimensional surface ordinate y/c = C(chi) S(chi) + chi * delta."""
    cls = class_function(chi, config.n1, config.n2)
    return bernstein_shape(chi, coeffs) * cls + np.asarray(chi, dtype=float) * delta


def naca0012_analytic(x, t=0.12):
    """Symmetric four-digit profile with the closed-TE -0.1036 coefficient."""
    x_a = np.asarray(x, dtype=float)
    if np.any(x_a < 0.0) or np.any(x_a > 1.0):
        raise ValueError("x outside [0, 1]")
    return 5.0 * t * (
        0.2969 * np.sqrt(x_a)
        - 0.1260 * x_a
        - 0.3516 * x_a**2
        + 0.2843 * x_a**3
        - 0.1036 * x_a**4
    )


def biconvex(x, t):
    """Parabolic-arc profile y = 2 t x (1 - x)."""
    x_a = np.asarray(x, dtype=float)
    if np.any(x_a < 0.0) or np.any(x_a > 1.0):
        raise ValueError("x outside [0, 1]")
    return 2.0 * t * x_a * (1.0 - x_a)


def naca0012_cst() -> DesignVector:
    """Closed-trailing-edge NACA0012 coefficients (order 5, N1=1/2, N2=1)."""
    upper = np.array(
        [0.17098638, 0.15535516, 0.15907811, 0.13787830, 0.14477407, 0.14382457]
    )
    return DesignVector(upper=upper, lower=-upper)


def chord_stations(i_max: int, sharpness: float) -> np.ndarray:
    """Sigmoid-stretched chordwise stations chi_1..chi_Ih, TE (1) to LE (0).

    The stretching index runs i = 1..I_h; the normalization pins the
    endpoints exactly regardless of the index convention inside the sigmoid.
    """
    if i_max % 2 == 0:
        raise ValueError("i_max must be odd")
    if i_max < 9:
        raise ValueError("i_max must be at least 9")
    i_half = (i_max + 1) // 2
    i = np.arange(1, i_half + 1, dtype=float)
    sigma = 1.0 / (1.0 + np.exp(-sharpness * (i / i_half - 0.5)))
    chi = 1.0 - (sigma - sigma[0]) / (sigma[-1] - sigma[0])
    chi[0] = 1.0
    chi[-1] = 0.0
    return chi


def sample_boundary(design: DesignVector, config: CstConfig, i_max: int) -> BoundaryCurve:
    """Sample the CST boundary at the stretched stations, looped at the TE."""
    x, y, chi = _boundary_arrays(design.upper, design.lower, config, i_max)
    return BoundaryCurve(points=np.stack([x, y], axis=-1), i_max=i_max, chi=chi)


def _boundary_arrays(upper, lower, config: CstConfig, i_max: int):
    """Boundary x, y, chi arrays; coefficients may be Duals.

    Ordering: lower surface TE -> LE (stations 1..I_h), then upper surface
    LE -> TE (sharing the LE point), so the closed curve has i_max rows with
    the trailing-edge seam duplicated in the first and last rows.
    """
    chi_side = chord_stations(i_max, config.sharpness)
    y_lower = cst_surface(chi_side, lower, config.delta_lower, config) * config.chord
    y_upper = cst_surface(chi_side, upper, config.delta_upper, config) * config.chord

    chi = np.concatenate([chi_side, chi_side[-2::-1]])
    x = config.x0 + config.chord * chi
    if isinstance(y_lower, dn.Dual):
        y = dn.Dual(
            np.concatenate([y_lower.val, y_upper.val[-2::-1]]),
            np.concatenate([y_lower.dot, y_upper.dot[-2::-1]], axis=0),
        )
    else:
        y = np.concatenate([y_lower, y_upper[-2::-1]])
    return x, y, chi


def save_design(path, design: DesignVector):
    """Write the 12 coefficients as one full-precision text row."""
    np.savetxt(path, design.flatten()[None, :], fmt="%.17g")


def load_design(path) -> DesignVector:
    return DesignVector.from_flat(np.loadtxt(path).ravel())


def save_boundary_csv(path, curve: BoundaryCurve):
    with open(path, "w") as fh:
        fh.write("i,x,y\n")
        for i in range(curve.i_max):
            fh.write(f"{i + 1},{curve.x[i]:.17g},{curve.y[i]:.17g}\n")
