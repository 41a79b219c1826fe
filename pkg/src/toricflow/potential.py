"""Symplectic potentials ``u = u0 + f`` with Guillemin boundary behaviour.

``u0 = 1/2 sum_k l_k log l_k`` is handled in closed form; the smooth part
``f`` is a :class:`~toricflow.spline.GridSpline` over the bounding box of the
polytope (or any object exposing ``derivs(X, order)``).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Any, Callable

import numpy as np

from .polytope import DelzantPolytope, facet_values
from .spline import GridSpline

MAX_ORDER = 4


class DomainError(ValueError):
    """Evaluation point outside the admissible (margin) region."""


class LegendreError(RuntimeError):
    """Newton iteration for the inverse Legendre map failed."""


@dataclass
class DerivativeBundle:
    """Derivatives of ``u`` at one point or a batch of points.

    Batched arrays carry a leading point axis; entries past the requested
    order are ``None``.
    """

    value: np.ndarray
    gradient: np.ndarray | None = None
    hessian: np.ndarray | None = None
    third: np.ndarray | None = None
    fourth: np.ndarray | None = None

    def as_list(self) -> list:
        return [self.value, self.gradient, self.hessian, self.third, self.fourth]

    @classmethod
    def from_list(cls, parts: list) -> "DerivativeBundle":
        parts = list(parts) + [None] * (5 - len(parts))
        return cls(*parts)

    def squeeze(self) -> "DerivativeBundle":
        return DerivativeBundle(*[None if a is None else a[0] for a in self.as_list()])

    def __add__(self, other: "DerivativeBundle") -> "DerivativeBundle":
        return DerivativeBundle(*[
            None if (a is None or b is None) else a + b
            for a, b in zip(self.as_list(), other.as_list())
        ])


def as_points(n: int, x) -> tuple[np.ndarray, bool]:
    """Normalise ``x`` to shape ``(m, n)``; the flag marks a single point."""
    X = np.asarray(x, dtype=float)
    if X.ndim == 0:
        if n != 1:
            raise ValueError("scalar point given for a multi-dimensional polytope")
        return X.reshape(1, 1), True
    if X.ndim == 1:
        if len(X) == n:
            return X.reshape(1, n), True
        if n == 1:
            return X.reshape(-1, 1), False
        raise ValueError(f"point has length {len(X)}, expected {n}")
    if X.ndim == 2 and X.shape[1] == n:
        return X, False
    raise ValueError(f"points must have trailing dimension {n}")


def _outer_power(U: np.ndarray, k: int) -> np.ndarray:
    """``u_k^{(x) k}`` for every facet normal; shape ``(d, n, ..., n)``."""
    out = U
    for _ in range(k - 1):
        out = out[..., None] * U.reshape((U.shape[0],) + (1,) * (out.ndim - 1) + (U.shape[1],))
    return out


def _guillemin(P: DelzantPolytope, X: np.ndarray, order: int) -> DerivativeBundle:
    U = P.normals.astype(float)
    L = facet_values(P, X)
    value = 0.5 * np.sum(L * np.log(L), axis=1)
    parts: list = [value]
    if order >= 1:
        parts.append(0.5 * (np.log(L) + 1.0) @ U)
    # d^k/dl^k (l log l / 2) = (-1)^k (k-2)! / (2 l^(k-1)) for k >= 2
    coeff = {2: 0.5, 3: -0.5, 4: 1.0}
    for k in range(2, order + 1):
        w = coeff[k] / L ** (k - 1)
        outer = _outer_power(U, k).reshape(len(U), -1)
        parts.append((w @ outer).reshape((len(X),) + (P.dimension,) * k))
    return DerivativeBundle.from_list(parts)


def guillemin_derivs(P: DelzantPolytope, x, order: int = MAX_ORDER) -> DerivativeBundle:
    """Closed-form derivatives of ``u0 = 1/2 sum l_k log l_k`` up to ``order``."""
    if not 0 <= order <= MAX_ORDER:
        raise ValueError("order must be in 0..4")
    X, single = as_points(P.dimension, x)
    if np.any(facet_values(P, X) <= 0):
        raise DomainError("u0 is singular on and outside the boundary")
    out = _guillemin(P, X, order)
    return out.squeeze() if single else out


class AnalyticPart:
    """Smooth part given by a callable returning ``[f, grad, hess, ...]``."""

    def __init__(self, func: Callable[[np.ndarray, int], list]):
        self.func = func

    def derivs(self, X: np.ndarray, order: int = MAX_ORDER, basis=None) -> list:
        return list(self.func(X, order))[: order + 1]


@dataclass(frozen=True, eq=False)
class SymplecticPotential:
    """``u = singular * u0 + f`` on a Delzant polytope.

    ``singular=False`` drops ``u0`` (test mode for flat metrics).  Points
    closer than ``margin`` to the boundary (in facet-function value) are
    rejected by the checked evaluators.
    """

    polytope: DelzantPolytope
    smooth: Any
    singular: bool = True
    margin: float = 0.0

    @property
    def dimension(self) -> int:
        return self.polytope.dimension

    def with_smooth(self, smooth) -> "SymplecticPotential":
        return replace(self, smooth=smooth)

    def with_margin(self, margin: float) -> "SymplecticPotential":
        return replace(self, margin=margin)

    def in_domain(self, X: np.ndarray, margin: float | None = None) -> np.ndarray:
        margin = self.margin if margin is None else margin
        lv = facet_values(self.polytope, X).min(axis=1)
        ok = lv > 0 if margin <= 0 else lv >= margin
        if isinstance(self.smooth, GridSpline):
            ok &= self.smooth.contains(X)
        return ok

    def derivs(self, X: np.ndarray, order: int = MAX_ORDER, basis=None,
               singular_part: DerivativeBundle | None = None) -> DerivativeBundle:
        """Unchecked batched derivatives at ``X`` of shape ``(m, n)``.

        ``singular_part`` lets callers reuse precomputed ``u0`` derivatives.
        """
        parts = self.smooth.derivs(X, order, basis=basis)
        f = DerivativeBundle.from_list(parts)
        if not self.singular:
            return f
        g = singular_part if singular_part is not None else _guillemin(self.polytope, X, order)
        return g + f


def zero_potential(P: DelzantPolytope, h: float = 1 / 32, margin: float = 0.0) -> SymplecticPotential:
    """The Guillemin potential ``u0`` itself (``f = 0`` on a grid of spacing ``h``)."""
    lo, hi = P.bbox
    return SymplecticPotential(P, GridSpline.over_box(lo, hi, h), margin=margin)


def potential_from_function(P: DelzantPolytope, func, h: float = 1 / 32, singular: bool = True,
                            margin: float = 0.0) -> SymplecticPotential:
    """``u0 + f`` with ``f`` sampled from ``func(X)`` on the bounding-box grid."""
    lo, hi = P.bbox
    return SymplecticPotential(P, GridSpline.over_box(lo, hi, h, func), singular=singular,
                               margin=margin)


def quadratic_potential(P: DelzantPolytope, h: float = 1 / 16) -> SymplecticPotential:
    """Flat test potential ``|x|^2 / 2`` with the singular part disabled."""
    return potential_from_function(P, lambda X: 0.5 * np.sum(X ** 2, axis=1), h=h,
                                   singular=False)


def normalized(u: SymplecticPotential, x0=None) -> SymplecticPotential:
    """Subtract the affine function making ``u(x0) = 0`` and ``grad u(x0) = 0``.

    ``x0`` defaults to the polytope centroid.  Curvature is unaffected.
    """
    if not isinstance(u.smooth, GridSpline):
        raise TypeError("normalisation needs a grid-sampled smooth part")
    x0 = u.polytope.centroid if x0 is None else np.asarray(x0, dtype=float).reshape(-1)
    d = u.derivs(x0.reshape(1, -1), order=1)
    c, g = float(d.value[0]), d.gradient[0]
    nodes = u.smooth.nodes()
    shift = c + (nodes - x0) @ g
    return u.with_smooth(u.smooth.with_values(u.smooth.values.ravel() - shift))


def _checked(u: SymplecticPotential, x) -> tuple[np.ndarray, bool]:
    X, single = as_points(u.dimension, x)
    if not np.all(u.in_domain(X)):
        raise DomainError("point outside the margin region of the potential")
    return X, single


def eval_derivs(u: SymplecticPotential, x, order: int = MAX_ORDER) -> DerivativeBundle:
    """Derivatives of ``u0 + f`` at ``x`` (single point or batch)."""
    if not 0 <= order <= MAX_ORDER:
        raise ValueError("order must be in 0..4")
    X, single = _checked(u, x)
    out = u.derivs(X, order)
    return out.squeeze() if single else out


@dataclass
class ConvexityReport:
    min_eigenvalue: float
    witness: np.ndarray
    passed: bool


def convexity_check(u: SymplecticPotential, grid) -> ConvexityReport:
    """Smallest Hessian eigenvalue of ``u`` over the grid points."""
    pts = grid.points if hasattr(grid, "points") else np.asarray(grid, dtype=float)
    H = u.derivs(pts, order=2).hessian
    eig = np.linalg.eigvalsh(H)[:, 0]
    i = int(np.argmin(eig))
    return ConvexityReport(float(eig[i]), pts[i].copy(), bool(eig[i] > 0))


@dataclass
class KahlerDualPoint:
    xi: np.ndarray
    phi: float


def legendre_forward(u: SymplecticPotential, x) -> KahlerDualPoint:
    """``xi = grad u(x)`` and ``phi = <x, xi> - u(x)``."""
    X, _ = _checked(u, x)
    if len(X) != 1:
        raise ValueError("legendre_forward takes a single point")
    d = u.derivs(X, order=1)
    xi = d.gradient[0]
    return KahlerDualPoint(xi=xi, phi=float(X[0] @ xi - d.value[0]))


def legendre_inverse(u: SymplecticPotential, xi, x_start=None, tol: float = 1e-10,
                     max_iter: int = 200) -> np.ndarray:
    """Solve ``grad u(x) = xi`` by damped Newton on ``u(x) - <xi, x>``.

    Steps are halved while the trial point leaves the margin region or the
    objective fails to decrease.
    """
    n = u.dimension
    xi = np.asarray(xi, dtype=float).reshape(n)
    x = u.polytope.centroid.copy() if x_start is None else np.asarray(x_start, float).reshape(n)
    if not u.in_domain(x[None])[0]:
        raise DomainError("starting point outside the margin region")

    def objective(p):
        d = u.derivs(p[None], order=2)
        return d.value[0] - xi @ p, d.gradient[0] - xi, d.hessian[0]

    val, res, H = objective(x)
    for _ in range(max_iter):
        if np.linalg.norm(res) <= tol:
            return x
        step = -np.linalg.solve(H, res)
        t = 1.0
        while True:
            trial = x + t * step
            if u.in_domain(trial[None])[0]:
                tval, tres, tH = objective(trial)
                # objective test only far from convergence; near it rounding dominates
                if tval <= val + 1e-4 * t * (res @ step) or np.linalg.norm(tres) < np.linalg.norm(res):
                    break
            t *= 0.5
            if t < 1e-14:
                raise LegendreError("xi outside the gradient image of the margin region")
        x, val, res, H = trial, tval, tres, tH
    if np.linalg.norm(res) <= tol:
        return x
    raise LegendreError(f"Newton did not converge (residual {np.linalg.norm(res):.3e})")


# -- checkpoints -------------------------------------------------------------

def save_checkpoint(f: GridSpline, path) -> None:
    """Header line (JSON) then row-major float64 little-endian node values."""
    header = {"n": f.dimension, "shape": list(f.shape),
              "bbox": [[float(a), float(b)] for a, b in zip(f.lo, f.hi)], "h": f.h}
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes(order="C"))


def load_checkpoint(path) -> GridSpline:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("ascii"))
        raw = fh.read()
    shape = tuple(header["shape"])
    expected = 8 * int(np.prod(shape))
    if len(raw) != expected or len(shape) != header["n"]:
        raise ValueError(f"checkpoint payload has {len(raw)} bytes, expected {expected}")
    values = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(float)
    lo = [b[0] for b in header["bbox"]]
    return GridSpline(lo, header["h"], values)

