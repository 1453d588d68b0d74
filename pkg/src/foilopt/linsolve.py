"""Banded direct solvers for the ADI/AF2 sweeps.

All three solvers accept batched right-hand sides and band coefficients:
arrays of shape (N,) or (N, B), solving B independent systems at once.
No pivoting; the sweeps only produce diagonally dominant systems, so a zero
pivot is treated as a solver-parameter fault.
"""

from __future__ import annotations

import numpy as np

from .errors import SingularSystemError

_PIVOT_TOL = 0.0


def _check_pivot(p):
    if np.any(np.abs(p) <= _PIVOT_TOL) or not np.all(np.isfinite(p)):
        raise SingularSystemError("zero pivot in banded solve")


def _align(band, rhs):
    """Left-align a 1-D band with a batched rhs of shape (N, B...)."""
    band = np.asarray(band, dtype=float)
    if band.ndim < rhs.ndim:
        band = band.reshape(band.shape + (1,) * (rhs.ndim - band.ndim))
    return band


def solve_tridiagonal(sub, diag, sup, rhs):
    """Thomas algorithm for A x = rhs.

    ``sub[k]`` couples row k to column k-1 (sub[0] ignored), ``sup[k]`` to
    column k+1 (sup[-1] ignored).
    """
    rhs = np.asarray(rhs, dtype=float)
    sub = _align(sub, rhs)
    diag = _align(diag, rhs)
    sup = _align(sup, rhs)
    n = diag.shape[0]
    if n == 1:
        _check_pivot(diag[0])
        return rhs / diag

    cp = np.empty(np.broadcast_shapes(sup.shape, rhs.shape))
    dp = np.empty_like(rhs)
    _check_pivot(diag[0])
    cp[0] = sup[0] / diag[0]
    dp[0] = rhs[0] / diag[0]
    for k in range(1, n):
        den = diag[k] - sub[k] * cp[k - 1]
        _check_pivot(den)
        cp[k] = sup[k] / den
        dp[k] = (rhs[k] - sub[k] * dp[k - 1]) / den
    for k in range(n - 2, -1, -1):
        dp[k] -= cp[k] * dp[k + 1]
    return dp


def solve_periodic_tridiagonal(sub, diag, sup, rhs):
    """Cyclic tridiagonal solve via a Sherman-Morrison rank-one correction.

    ``sub[0]`` is the corner coupling of row 0 to column N-1 and
    ``sup[N-1]`` the coupling of row N-1 to column 0.
    """
    rhs = np.asarray(rhs, dtype=float)
    sub = np.broadcast_to(_align(sub, rhs), rhs.shape).copy()
    diag = np.broadcast_to(_align(diag, rhs), rhs.shape).copy()
    sup = np.broadcast_to(_align(sup, rhs), rhs.shape).copy()
    n = diag.shape[0]
    if n < 3:
        raise ValueError("periodic solve needs N >= 3")

    corner_tr = sub[0].copy()  # A[0, n-1]
    corner_bl = sup[-1].copy()  # A[n-1, 0]

    gamma = -diag[0].copy()
    _check_pivot(gamma)
    diag[0] -= gamma
    diag[-1] -= corner_bl * corner_tr / gamma
    sub[0] = 0.0
    sup[-1] = 0.0

    u = np.zeros_like(rhs)
    u[0] = gamma
    u[-1] = corner_bl

    # one batched Thomas pass for both the rhs and the correction vector
    both = solve_tridiagonal(sub[..., None], diag[..., None], sup[..., None], np.stack([rhs, u], axis=-1))
    y = both[..., 0]
    w = both[..., 1]

    v_dot_y = y[0] + corner_tr / gamma * y[-1]
    v_dot_w = w[0] + corner_tr / gamma * w[-1]
    denom = 1.0 + v_dot_w
    _check_pivot(denom)
    return y - w * (v_dot_y / denom)


def solve_lower_bidiagonal(diag, sub, rhs):
    """Forward substitution for a lower bidiagonal system.

    ``sub[k]`` couples row k+1 to column k (length N-1).
    """
    rhs = np.asarray(rhs, dtype=float)
    diag = _align(diag, rhs)
    sub = _align(sub, rhs)
    n = diag.shape[0]
    _check_pivot(diag)
    x = np.empty_like(rhs)
    x[0] = rhs[0] / diag[0]
    for k in range(1, n):
        x[k] = (rhs[k] - sub[k - 1] * x[k - 1]) / diag[k]
    return x
