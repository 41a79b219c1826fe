"""Tensor-product quintic interpolating splines with derivatives to order 4.

Each axis carries a not-a-knot quintic interpolant built by
:func:`scipy.interpolate.make_interp_spline`; the tensor coefficients are
obtained by applying the per-axis collocation inverse along every axis.
Derivatives at scattered points are contractions of the coefficient tensor
with per-axis basis-derivative matrices.
"""
from __future__ import annotations

from functools import lru_cache
from itertools import combinations_with_replacement, permutations

import numpy as np
from scipy.interpolate import BSpline, make_interp_spline

DEGREE = 5
MAX_ORDER = 4


@lru_cache(maxsize=64)
def _axis_data(nodes: tuple[float, ...]) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(nodes)
    spl = make_interp_spline(x, np.eye(len(x)), k=DEGREE)
    # spl.c maps node values to B-spline coefficients
    return spl.t, np.ascontiguousarray(spl.c)


def axis_basis(nodes: np.ndarray, z: np.ndarray, order: int) -> list[np.ndarray]:
    """Matrices ``E[nu]`` of shape ``(len(z), len(nodes))``, ``nu = 0..order``.

    ``E[nu] @ values`` is the ``nu``-th derivative of the 1-D interpolant.
    """
    t, cinv = _axis_data(tuple(float(a) for a in nodes))
    nb = cinv.shape[0]
    basis = BSpline(t, np.eye(nb), DEGREE, extrapolate=True)
    return [basis(z, nu) @ cinv for nu in range(order + 1)]


@lru_cache(maxsize=16)
def multi_indices(n: int, order: int) -> tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]:
    """Sorted index tuples of length ``order`` with their axis counts."""
    out = []
    for idx in combinations_with_replacement(range(n), order):
        alpha = tuple(idx.count(a) for a in range(n))
        out.append((idx, alpha))
    return tuple(out)


def symmetric_fill(n: int, order: int, values: dict, m: int) -> np.ndarray:
    """Assemble a symmetric tensor from its sorted-index entries."""
    T = np.empty((m,) + (n,) * order)
    for idx, _alpha in multi_indices(n, order):
        val = values[idx]
        for perm in set(permutations(idx)):
            T[(slice(None),) + perm] = val
    return T


class PointBasis:
    """Per-axis basis-derivative matrices for a fixed set of points."""

    def __init__(self, axes: list[np.ndarray], X: np.ndarray, order: int = MAX_ORDER):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        self.points = X
        self.order = order
        self.mats = [axis_basis(ax, X[:, d], order) for d, ax in enumerate(axes)]

    def contract(self, values: np.ndarray, alpha: tuple[int, ...]) -> np.ndarray:
        """Derivative ``D^alpha`` of the interpolant of ``values`` at the points."""
        n = values.ndim
        E0 = self.mats[0][alpha[0]]
        if n == 1:
            return E0 @ values
        T = E0 @ values.reshape(values.shape[0], -1)
        T = T.reshape((len(E0),) + values.shape[1:])
        for d in range(1, n):
            E = self.mats[d][alpha[d]]
            T = np.einsum("pj,pj...->p...", E, T)
        return T


class GridSpline:
    """Smooth function sampled on a uniform tensor grid over a box.

    Nodes along axis ``i`` are ``lo[i] + j * h`` for ``j < shape[i]``.
    """

    def __init__(self, lo, h: float, values: np.ndarray):
        values = np.array(values, dtype=float)
        self.lo = np.atleast_1d(np.asarray(lo, dtype=float))
        self.h = float(h)
        self.values = values
        self.values.setflags(write=False)
        if values.ndim != len(self.lo):
            raise ValueError("values rank must match box dimension")
        if min(values.shape) < DEGREE + 1:
            raise ValueError(f"need at least {DEGREE + 1} nodes per axis")

    @property
    def dimension(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def axes(self) -> list[np.ndarray]:
        return [self.lo[i] + np.arange(s) * self.h for i, s in enumerate(self.shape)]

    @property
    def hi(self) -> np.ndarray:
        return self.lo + (np.array(self.shape) - 1) * self.h

    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @classmethod
    def over_box(cls, lo, hi, h: float, func=None) -> "GridSpline":
        """Grid with spacing ``h`` covering ``[lo, hi]``; samples ``func`` if given."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        counts = [max(int(np.ceil((hi[i] - lo[i]) / h - 1e-9)), DEGREE) + 1
                  for i in range(len(lo))]
        if func is None:
            return cls(lo, h, np.zeros(counts))
        axes = [lo[i] + np.arange(c) * h for i, c in enumerate(counts)]
        mesh = np.meshgrid(*axes, indexing="ij")
        nodes = np.stack([m.ravel() for m in mesh], axis=1)
        vals = np.asarray(func(nodes), dtype=float).reshape(counts)
        return cls(lo, h, vals)

    def with_values(self, values: np.ndarray) -> "GridSpline":
        return GridSpline(self.lo, self.h, np.asarray(values, dtype=float).reshape(self.shape))

    def contains(self, X: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        X = np.atleast_2d(X)
        span = self.hi - self.lo
        return np.all((X >= self.lo - tol * span) & (X <= self.hi + tol * span), axis=1)

    def basis(self, X: np.ndarray, order: int = MAX_ORDER) -> PointBasis:
        return PointBasis(self.axes, X, order)

    def derivs(self, X: np.ndarray, order: int = MAX_ORDER,
               basis: PointBasis | None = None) -> list[np.ndarray]:
        """``[value, gradient, hessian, third, fourth][:order + 1]`` at ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if basis is None:
            basis = self.basis(X, order)
        n, m = self.dimension, len(X)
        out = [basis.contract(self.values, (0,) * n)]
        for k in range(1, order + 1):
            entries = {idx: basis.contract(self.values, alpha)
                       for idx, alpha in multi_indices(n, k)}
            out.append(symmetric_fill(n, k, entries, m))
        return out
