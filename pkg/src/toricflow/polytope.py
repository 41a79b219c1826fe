"""Delzant polytopes given by facet inequalities, plus quadrature grids.

A polytope is stored as integer facet normals ``u_k`` and real offsets
``lam_k`` with ``l_k(x) = <x, u_k> - lam_k >= 0``.  Vertices are computed on
construction by enumerating ``n``-subsets of facets.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import reduce
from itertools import combinations
from typing import Any, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull

VERTEX_TOL = 1e-9


class PolytopeError(ValueError):
    """Raised for malformed, unbounded or degenerate polytope data."""


@dataclass(frozen=True, eq=False)
class DelzantPolytope:
    """Polytope ``{x : <x, u_k> >= lam_k}`` with primitive integer normals."""

    dimension: int
    normals: np.ndarray  # (d, n) int
    offsets: np.ndarray  # (d,) float
    vertices: np.ndarray = field(repr=False)  # (v, n) float

    @property
    def n_facets(self) -> int:
        return len(self.offsets)

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def centroid(self) -> np.ndarray:
        """Volume centroid (vertex mean for segments)."""
        if self.dimension == 1:
            return self.vertices.mean(axis=0)
        hull = ConvexHull(self.vertices)
        # centroid from a fan of simplices over the hull facets
        c0 = self.vertices.mean(axis=0)
        total = 0.0
        acc = np.zeros(self.dimension)
        for simplex in hull.simplices:
            pts = np.vstack([c0, self.vertices[simplex]])
            vol = abs(np.linalg.det(pts[1:] - pts[0])) / math.factorial(self.dimension)
            total += vol
            acc += vol * pts.mean(axis=0)
        return acc / total

    def to_dict(self) -> dict[str, Any]:
        return {
            "dimension": self.dimension,
            "facets": [
                {"normal": [int(a) for a in u], "offset": float(lam)}
                for u, lam in zip(self.normals, self.offsets)
            ],
        }

    def scaled(self, lam: float) -> "DelzantPolytope":
        """The dilated polytope ``lam * P`` (same normals, offsets times ``lam``)."""
        return from_facets(self.normals, lam * self.offsets)


def _primitive(u: Sequence[int]) -> bool:
    return reduce(math.gcd, (abs(int(a)) for a in u)) == 1


def facet_values(P: DelzantPolytope, x) -> np.ndarray:
    """Affine facet functions ``l_k(x)``; shape ``(..., d)``."""
    X = np.asarray(x, dtype=float)
    if P.dimension == 1 and X.ndim == 1 and X.shape[-1] != 1:
        X = X[:, None]
    elif X.ndim == 0:
        X = X.reshape(1)
    return X @ P.normals.T.astype(float) - P.offsets


def _enumerate_vertices(normals: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    d, n = normals.shape
    U = normals.astype(float)
    found: list[np.ndarray] = []
    for subset in combinations(range(d), n):
        A = U[list(subset)]
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        v = np.linalg.solve(A, offsets[list(subset)])
        if np.all(U @ v - offsets >= -VERTEX_TOL):
            if not any(np.allclose(v, w, atol=1e-9) for w in found):
                found.append(v)
    if not found:
        return np.zeros((0, n))
    V = np.array(found)
    order = np.lexsort(V.T[::-1])
    return V[order]


def _check_bounded(U: np.ndarray) -> bool:
    # bounded iff the recession cone {d : U d >= 0} is trivial
    n = U.shape[1]
    for i in range(n):
        for sign in (1.0, -1.0):
            c = np.zeros(n)
            c[i] = -sign
            res = linprog(c, A_ub=-U, b_ub=np.zeros(len(U)), bounds=[(-1, 1)] * n,
                          method="highs")
            if res.status == 0 and -res.fun > 1e-9:
                return False
    return True


def _chebyshev_radius(U: np.ndarray, lam: np.ndarray) -> float:
    n = U.shape[1]
    norms = np.linalg.norm(U, axis=1)
    # maximise r s.t. U x - lam >= r |u|
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-U, norms[:, None]])
    res = linprog(c, A_ub=A_ub, b_ub=-lam, bounds=[(None, None)] * n + [(0, None)],
                  method="highs")
    if res.status != 0:
        return 0.0
    return float(res.x[-1])


def from_facets(normals, offsets) -> DelzantPolytope:
    """Build and validate a polytope from normals and offsets."""
    try:
        U = np.array(normals)
        lam = np.array(offsets, dtype=float)
    except (TypeError, ValueError) as exc:
        raise PolytopeError(f"malformed facet data: {exc}") from exc
    if U.ndim != 2 or lam.ndim != 1 or len(U) != len(lam) or len(U) == 0:
        raise PolytopeError("facets must be a non-empty list of (normal, offset)")
    if not np.issubdtype(U.dtype, np.integer):
        if not np.all(np.isfinite(U.astype(float))) or np.any(U != np.round(U)):
            raise PolytopeError("facet normals must be integer vectors")
        U = np.round(U)
    U = U.astype(np.int64)
    if not np.all(np.isfinite(lam)):
        raise PolytopeError("facet offsets must be finite")
    for u in U:
        if not _primitive(u):
            raise PolytopeError(f"normal {u.tolist()} is not primitive")
    Uf = U.astype(float)
    if not _check_bounded(Uf):
        raise PolytopeError("polytope is unbounded")
    if _chebyshev_radius(Uf, lam) <= 1e-9:
        raise PolytopeError("polytope has empty interior")
    V = _enumerate_vertices(U, lam)
    return DelzantPolytope(dimension=U.shape[1], normals=U, offsets=lam, vertices=V)


def parse_polytope(spec) -> DelzantPolytope:
    """Parse a polytope from JSON text or an already-decoded mapping.

    Expected fields: ``"dimension"`` (int) and ``"facets"``, a list of
    ``{"normal": [int, ...], "offset": number}``.
    """
    if isinstance(spec, (str, bytes)):
        try:
            spec = json.loads(spec)
        except json.JSONDecodeError as exc:
            raise PolytopeError(f"malformed polytope spec: {exc}") from exc
    if not isinstance(spec, dict) or "dimension" not in spec or "facets" not in spec:
        raise PolytopeError("polytope spec needs 'dimension' and 'facets'")
    n = spec["dimension"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise PolytopeError("'dimension' must be a positive integer")
    normals, offsets = [], []
    for f in spec["facets"]:
        if not isinstance(f, dict) or "normal" not in f or "offset" not in f:
            raise PolytopeError("each facet needs 'normal' and 'offset'")
        u = f["normal"]
        if (not isinstance(u, list) or len(u) != n
                or not all(isinstance(a, int) and not isinstance(a, bool) for a in u)):
            raise PolytopeError(f"normal {u!r} must be a list of {n} integers")
        off = f["offset"]
        if not isinstance(off, (int, float)) or isinstance(off, bool):
            raise PolytopeError(f"offset {off!r} must be a number")
        normals.append(u)
        offsets.append(float(off))
    return from_facets(np.array(normals, dtype=np.int64).reshape(len(normals), n), offsets)


def load_polytope(path) -> DelzantPolytope:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_polytope(fh.read())


@dataclass
class DelzantReport:
    passed: bool
    primitive: list[bool]
    vertices: list[dict[str, Any]]
    witness: list[float] | None = None

    def to_dict(self) -> dict[str, Any]:
        return {"passed": self.passed, "primitive": self.primitive,
                "vertices": self.vertices, "witness": self.witness}


def delzant_check(P: DelzantPolytope) -> DelzantReport:
    """Per-vertex smoothness: exactly ``n`` active facets with unimodular normals."""
    primitive = [_primitive(u) for u in P.normals]
    rows = []
    witness = None
    for v in P.vertices:
        lv = facet_values(P, v)
        active = [int(k) for k in np.flatnonzero(np.abs(lv) <= VERTEX_TOL)]
        ok = len(active) == P.dimension
        det = None
        if ok:
            det = float(round(np.linalg.det(P.normals[active].astype(float))))
            ok = abs(det) == 1.0
        rows.append({"vertex": v.tolist(), "active_facets": active,
                     "determinant": det, "unimodular": ok})
        if not ok and witness is None:
            witness = v.tolist()
    passed = all(primitive) and witness is None
    return DelzantReport(passed=passed, primitive=primitive, vertices=rows, witness=witness)


def volume(P: DelzantPolytope) -> float:
    if P.dimension == 1:
        return float(np.ptp(P.vertices[:, 0]))
    return float(ConvexHull(P.vertices).volume)


def _facet_frame(u: np.ndarray) -> np.ndarray:
    """Orthonormal basis (rows) of the hyperplane orthogonal to ``u``."""
    n = len(u)
    if n == 1:
        return np.zeros((0, 1))
    q, _ = np.linalg.qr(np.column_stack([u, np.eye(n)]))
    return q[:, 1:n].T


def facet_measures(P: DelzantPolytope) -> np.ndarray:
    """Lattice-normalised measures ``sigma(F_k)`` with ``dsigma ^ dl_k = dmu``."""
    out = np.zeros(P.n_facets)
    for k, u in enumerate(P.normals.astype(float)):
        on = P.vertices[np.abs(facet_values(P, P.vertices)[:, k]) <= VERTEX_TOL]
        norm = np.linalg.norm(u)
        if P.dimension == 1:
            area = 1.0
        elif P.dimension == 2:
            proj = on @ _facet_frame(u).T
            area = float(np.ptp(proj[:, 0]))
        else:
            proj = on @ _facet_frame(u).T
            area = float(ConvexHull(proj).volume)
        out[k] = area / norm
    return out


def euclid_dist_boundary(P: DelzantPolytope, x) -> float:
    """``min_k l_k(x) / |u_k|`` for an interior point."""
    lv = facet_values(P, np.asarray(x, dtype=float).reshape(P.dimension))
    if np.any(lv <= 0):
        raise PolytopeError("point is not interior")
    return float(np.min(lv / np.linalg.norm(P.normals.astype(float), axis=1)))


def euclid_facet_distances(P: DelzantPolytope, X) -> np.ndarray:
    """Euclidean distances to each facet hyperplane, shape ``(m, d)``."""
    return facet_values(P, X) / np.linalg.norm(P.normals.astype(float), axis=1)


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Cell-centred tensor grid clipped to ``{min_k l_k >= delta}``."""

    h: float
    delta: float
    points: np.ndarray  # (m, n)
    weights: np.ndarray  # (m,)
    index: np.ndarray  # (m, n) integer cell indices
    shape: tuple[int, ...]
    facet_points: list[np.ndarray]
    facet_weights: list[np.ndarray]
    lattice: bool = True  # points sit on a lattice with unique indices

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())


def build_grid(P: DelzantPolytope, h: float, delta: float, offset: float = 0.5) -> QuadratureGrid:
    """Grid of spacing ``h`` keeping points at margin ``delta``.

    ``offset = 0.5`` gives cell centres (midpoint rule); ``offset = 0`` puts
    the points on the nodes ``lo + j h``.
    """
    if not h > 0 or not delta > 0:
        raise ValueError("h and delta must be positive")
    lo, hi = P.bbox
    n = P.dimension
    counts = [max(int(np.ceil((hi[i] - lo[i]) / h - 1e-9)), 1) + (offset == 0) for i in range(n)]
    axes = [lo[i] + (np.arange(counts[i]) + offset) * h for i in range(n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    idx = np.stack([m.ravel() for m in np.meshgrid(*[np.arange(c) for c in counts],
                                                   indexing="ij")], axis=1)
    keep = facet_values(P, pts).min(axis=1) >= delta - 1e-12
    pts, idx = pts[keep], idx[keep]
    if len(pts) == 0:
        raise ValueError("quadrature grid is empty; reduce h or delta")
    fpts, fwts = _facet_grids(P, h)
    return QuadratureGrid(h=h, delta=delta, points=pts, weights=np.full(len(pts), h ** n),
                          index=idx, shape=tuple(counts), facet_points=fpts,
                          facet_weights=fwts)


def gauss_grid(P: DelzantPolytope, h: float, q: int = 3, refine: int = 8) -> QuadratureGrid:
    """Tensor Gauss-Legendre rule with ``q`` points per axis on every cell of spacing ``h``.

    Cells cut by the boundary are split into ``refine**n`` sub-cells whose
    Gauss points are kept when they lie strictly inside ``P``.
    """
    lo, hi = P.bbox
    n = P.dimension
    counts = [max(int(np.ceil((hi[i] - lo[i]) / h - 1e-9)), 1) for i in range(n)]
    g, gw = np.polynomial.legendre.leggauss(q)
    g, gw = 0.5 * (g + 1.0), 0.5 * gw

    def rule(sub: int):
        t = ((np.arange(sub)[:, None] + g[None, :]) / sub).ravel()
        w = np.tile(gw / sub, sub)
        mesh = np.stack([m.ravel() for m in np.meshgrid(*[t] * n, indexing="ij")], axis=1)
        wm = np.prod(np.stack([m.ravel() for m in np.meshgrid(*[w] * n, indexing="ij")], axis=1), axis=1)
        return mesh, wm

    coarse, coarse_w = rule(1)
    fine, fine_w = rule(refine)
    cells = np.stack([m.ravel() for m in np.meshgrid(*[np.arange(c) for c in counts],
                                                     indexing="ij")], axis=1)
    corners = np.stack([m.ravel() for m in np.meshgrid(*[[0, 1]] * n, indexing="ij")], axis=1)
    cl = facet_values(P, (lo + (cells[:, None, :] + corners[None]) * h).reshape(-1, n))
    cl = cl.reshape(len(cells), len(corners), -1)
    inside = np.all(cl.min(axis=1) >= -1e-12, axis=1)
    outside = np.any(cl.max(axis=1) <= 1e-12, axis=1)
    pts, wts, idx = [], [], []
    for c in cells[inside]:
        pts.append(lo + (c + coarse) * h)
        wts.append(coarse_w * h ** n)
        idx.append(np.repeat(c[None], len(coarse), axis=0))
    for c in cells[~inside & ~outside]:
        cand = lo + (c + fine) * h
        keep = facet_values(P, cand).min(axis=1) > 0
        pts.append(cand[keep])
        wts.append(fine_w[keep] * h ** n)
        idx.append(np.repeat(c[None], int(keep.sum()), axis=0))
    fpts, fwts = _facet_grids(P, h)
    return QuadratureGrid(h=h, delta=0.0, points=np.concatenate(pts), weights=np.concatenate(wts),
                          index=np.concatenate(idx), shape=tuple(counts), facet_points=fpts,
                          facet_weights=fwts, lattice=False)


def _facet_grids(P: DelzantPolytope, h: float) -> tuple[list[np.ndarray], list[np.ndarray]]:
    n = P.dimension
    pts_out, wts_out = [], []
    all_lv = facet_values(P, P.vertices)
    for k, u in enumerate(P.normals.astype(float)):
        norm = np.linalg.norm(u)
        on = P.vertices[np.abs(all_lv[:, k]) <= VERTEX_TOL]
        if n == 1:
            pts_out.append(on.copy())
            wts_out.append(np.full(len(on), 1.0 / norm))
            continue
        frame = _facet_frame(u)
        base = on[0]
        proj = (on - base) @ frame.T
        plo, phi = proj.min(axis=0), proj.max(axis=0)
        if n == 2:
            m = max(int(np.ceil((phi[0] - plo[0]) / h - 1e-9)), 1)
            step = (phi[0] - plo[0]) / m
            s = plo[0] + (np.arange(m) + 0.5) * step
            pts_out.append(base + s[:, None] * frame[0])
            wts_out.append(np.full(m, step / norm))
            continue
        counts = [max(int(np.ceil((phi[i] - plo[i]) / h - 1e-9)), 1) for i in range(n - 1)]
        axes = [plo[i] + (np.arange(counts[i]) + 0.5) * h for i in range(n - 1)]
        mesh = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        cand = base + mesh @ frame
        lv = facet_values(P, cand)
        lv[:, k] = 0.0
        keep = lv.min(axis=1) >= -1e-12
        pts_out.append(cand[keep])
        wts_out.append(np.full(int(keep.sum()), h ** (n - 1) / norm))
    return pts_out, wts_out


def interval(a: float = 0.0, b: float = 1.0) -> DelzantPolytope:
    return from_facets([[1], [-1]], [a, -b])


def simplex(n: int = 2, size: float = 1.0) -> DelzantPolytope:
    normals = np.vstack([np.eye(n, dtype=np.int64), -np.ones((1, n), dtype=np.int64)])
    return from_facets(normals, np.r_[np.zeros(n), -size])


def cube(n: int = 2, size: float = 1.0) -> DelzantPolytope:
    normals = np.vstack([np.eye(n, dtype=np.int64), -np.eye(n, dtype=np.int64)])
    return from_facets(normals, np.r_[np.zeros(n), -size * np.ones(n)])
