"""Vectorized forward-mode dual numbers.

A ``Dual`` carries a value array of shape ``S`` and a derivative array of
shape ``S + (K,)`` holding directional derivatives along ``K`` seed
directions.  Residual and objective kernels are written against the small
set of operations below so the same code path runs on plain ndarrays
(primal solve) and on ``Dual`` (Jacobian assembly).
"""

from __future__ import annotations

import numpy as np


class Dual:
    """Array-of-dual-numbers: value ``val`` plus derivatives ``dot``."""

    __slots__ = ("val", "dot")

    # make ndarray binary ops defer to our reflected methods instead of
    # wrapping Dual instances in object arrays
    __array_ufunc__ = None

    def __init__(self, val, dot):
        self.val = np.asarray(val, dtype=float)
        self.dot = np.asarray(dot, dtype=float)
        if self.dot.shape[: self.val.ndim] != self.val.shape:
            raise ValueError("dot must have shape val.shape + (K,)")

    @property
    def ndirs(self):
        return self.dot.shape[-1]

    @classmethod
    def constant(cls, val, ndirs):
        val = np.asarray(val, dtype=float)
        return cls(val, np.zeros(val.shape + (ndirs,)))

    # ---- arithmetic ------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.dot + other.dot)
        return Dual(self.val + other, _bcast(self.dot, np.shape(other)))

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.val, -self.dot)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Dual) else -np.asarray(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.val * other.val,
                self.dot * other.val[..., None] + other.dot * self.val[..., None],
            )
        other = np.asarray(other, dtype=float)
        return Dual(self.val * other, self.dot * other[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            inv = 1.0 / other.val
            val = self.val * inv
            return Dual(val, (self.dot - other.dot * val[..., None]) * inv[..., None])
        other = np.asarray(other, dtype=float)
        return Dual(self.val / other, self.dot / other[..., None])

    def __rtruediv__(self, other):
        other = np.asarray(other, dtype=float)
        val = other / self.val
        return Dual(val, -self.dot * (val / self.val)[..., None])

    def __pow__(self, p):
        if not np.isscalar(p):
            raise TypeError("only scalar exponents supported")
        val = self.val**p
        return Dual(val, (p * self.val ** (p - 1.0))[..., None] * self.dot)

    # ---- array-like ------------------------------------------------------

    def __getitem__(self, idx):
        # basic indexing on the leading (value) axes leaves the direction
        # axis untouched, so the same index tuple applies to both arrays
        return Dual(self.val[idx], self.dot[idx])

    @property
    def shape(self):
        return self.val.shape


def _bcast(dot, shape):
    out_shape = np.broadcast_shapes(dot.shape[:-1], shape)
    return np.broadcast_to(dot, out_shape + dot.shape[-1:]).copy() if out_shape != dot.shape[:-1] else dot


# ---- generic helpers (work on Dual and ndarray alike) --------------------


def value(x):
    return x.val if isinstance(x, Dual) else np.asarray(x, dtype=float)


def roll(x, shift, axis=0):
    if isinstance(x, Dual):
        return Dual(np.roll(x.val, shift, axis=axis), np.roll(x.dot, shift, axis=axis))
    return np.roll(x, shift, axis=axis)


def where(mask, a, b):
    """Branch selection with an externally supplied (frozen) mask."""
    if isinstance(a, Dual) or isinstance(b, Dual):
        k = a.ndirs if isinstance(a, Dual) else b.ndirs
        a = a if isinstance(a, Dual) else Dual.constant(np.broadcast_to(a, np.shape(mask)), k)
        b = b if isinstance(b, Dual) else Dual.constant(np.broadcast_to(b, np.shape(mask)), k)
        return Dual(np.where(mask, a.val, b.val), np.where(mask[..., None], a.dot, b.dot))
    return np.where(mask, a, b)


def sqrt(x):
    return x**0.5 if isinstance(x, Dual) else np.sqrt(x)


def total(x):
    """Sum all value entries; derivatives reduce over the value axes."""
    if isinstance(x, Dual):
        return Dual(x.val.sum(), x.dot.reshape(-1, x.ndirs).sum(axis=0))
    return np.sum(x)


def stack_last(parts):
    if any(isinstance(p, Dual) for p in parts):
        k = next(p.ndirs for p in parts if isinstance(p, Dual))
        parts = [p if isinstance(p, Dual) else Dual.constant(p, k) for p in parts]
        return Dual(
            np.stack([p.val for p in parts], axis=-1),
            np.stack([p.dot for p in parts], axis=-2),
        )
    return np.stack(parts, axis=-1)


def seed(val, index_sets):
    """Build a Dual seeded with unit directions.

    ``index_sets`` is a sequence of K index tuples (or flat index arrays)
    into ``val``; direction k gets 1.0 at every position in set k.
    """
    val = np.asarray(val, dtype=float)
    k = len(index_sets)
    dot = np.zeros(val.shape + (k,))
    flat = dot.reshape(-1, k)
    for col, idx in enumerate(index_sets):
        flat[np.asarray(idx, dtype=int), col] = 1.0
    return Dual(val, dot)
