"""Blow-up rescaling, numerical checks of the geometric estimates, and
singularity detection on flow trajectories.

Every estimate is phrased as ``LHS <= RHS`` and reported through per-sample
margins ``RHS - LHS``; a report passes when the smallest margin is at least
``-tolerance``.
"""
from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .geometry import (curvature_fields, dist_facet_refined, facet_targets, geodesic_shoot,
                       segment_length)
from .mcondition import estimate_M
from .polytope import DelzantPolytope, euclid_facet_distances, facet_values, gauss_grid
from .potential import DomainError, SymplecticPotential
from .spline import GridSpline

LEMMAS = ("LENGTH_BOUND", "DIST_CORNER", "CURV_INEQ", "HESS_UPPER", "SINH_MONO",
          "SINH_SQ", "DEFINING_BOUND", "HESS_RATIO", "ELLIPTIC_BALLS")
# lemmas stated under |F| <= 1
NEEDS_UNIT_CURVATURE = {"HESS_UPPER", "SINH_MONO", "SINH_SQ", "DEFINING_BOUND",
                        "HESS_RATIO", "ELLIPTIC_BALLS"}
CORNER_CONSTANT = 1.0 / (math.sqrt(2.0) - 1.0)
RETAIN_DISTANCE = 10.0


class HypothesisError(ValueError):
    """The hypotheses of a lemma cannot be met at a sample."""


# -- rescaling -----------------------------------------------------------------

class _ScaledSmooth:
    """``x -> lam * f(x / lam) + <c, x> + c0`` for an arbitrary smooth part."""

    def __init__(self, inner, lam: float, lin: np.ndarray, const: float):
        self.inner, self.lam, self.lin, self.const = inner, lam, lin, const

    def derivs(self, X, order=4, basis=None):
        parts = self.inner.derivs(np.asarray(X) / self.lam, order)
        out = [self.lam ** (1 - k) * np.asarray(p) for k, p in enumerate(parts)]
        out[0] = out[0] + X @ self.lin + self.const
        if order >= 1:
            out[1] = out[1] + self.lin
        return out


@dataclass
class RescaledProblem:
    lam: float
    polytope: DelzantPolytope
    potential: SymplecticPotential
    source: SymplecticPotential
    point: np.ndarray | None = None
    time: float | None = None


def _correction(P_new: DelzantPolytope, lam: float):
    """``lam u0(x / lam) - u0_new(x) = -(log lam / 2) sum_k l_k_new(x)``: affine."""
    c = -0.5 * math.log(lam)
    U = P_new.normals.astype(float)
    return c * U.sum(axis=0), -c * float(P_new.offsets.sum())


def rescale(u: SymplecticPotential, lam: float, point=None, time: float | None = None
            ) -> RescaledProblem:
    """``u~(x) = lam u(x / lam)`` on ``lam P``, written as ``u0~ + f~``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    P_new = u.polytope.scaled(lam)
    lin, const = np.zeros(u.dimension), 0.0
    if u.singular and lam != 1.0:
        lin, const = _correction(P_new, lam)
    f = u.smooth
    if isinstance(f, GridSpline):
        if lam == 1.0:
            smooth = GridSpline(f.lo, f.h, f.values.copy())
        else:
            nodes = lam * f.nodes()
            vals = lam * f.values.ravel() + nodes @ lin + const
            smooth = GridSpline(lam * np.asarray(f.lo), lam * f.h, vals.reshape(f.shape))
    else:
        smooth = _ScaledSmooth(f, lam, lin, const)
    ut = SymplecticPotential(P_new, smooth, singular=u.singular, margin=lam * u.margin)
    return RescaledProblem(lam=float(lam), polytope=P_new, potential=ut, source=u,
                           point=None if point is None else np.asarray(point, float),
                           time=time)


@dataclass
class RescalingReport:
    lam: float
    fnorm_residual: float
    scalar_residual: float
    tolerance: float
    passed: bool
    m_hat: float | None = None
    m_hat_rescaled: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


def verify_rescaling(u: SymplecticPotential, lam: float, samples, tol: float = 1e-8,
                     compare_m: bool = False, seed: int = 0) -> RescalingReport:
    """Residuals of ``|F~|(lam p) = |F|(p) / lam`` and ``A~(lam p) = A(p) / lam``.

    Residuals are divided by ``1 + |F|(p) / lam``.
    """
    X = np.atleast_2d(np.asarray(samples, float))
    if not np.all(u.in_domain(X)):
        raise DomainError("samples must lie in the margin region")
    ut = rescale(u, lam).potential
    *_, F, A, _ = curvature_fields(u, X)
    *_, Ft, At, _ = curvature_fields(ut, lam * X)
    scale = 1.0 + F / lam
    rf = float(np.max(np.abs(Ft - F / lam) / scale))
    ra = float(np.max(np.abs(At - A / lam) / scale))
    rep = RescalingReport(lam=float(lam), fnorm_residual=rf, scalar_residual=ra,
                          tolerance=tol, passed=bool(rf <= tol and ra <= tol))
    if compare_m:
        rep.m_hat = estimate_M(u, seed=seed).M_hat
        rep.m_hat_rescaled = estimate_M(ut, seed=seed).M_hat
    return rep


# -- estimate suite ------------------------------------------------------------

@dataclass
class EstimateReport:
    lemma_id: str
    samples: str
    margins: list[float]
    min_margin: float
    witness: dict[str, Any]
    passed: bool
    tolerance: float
    params: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"lemma_id": self.lemma_id, "samples": self.samples,
                "margins": [float(m) for m in self.margins], "min_margin": self.min_margin,
                "witness": self.witness, "passed": self.passed, "tolerance": self.tolerance,
                "params": self.params}


def interior_samples(P: DelzantPolytope, count: int, seed: int = 0,
                     min_value: float = 0.05) -> np.ndarray:
    """``count`` points with ``min_k l_k >= min_value * diam``; first is the centroid."""
    rng = np.random.default_rng(seed)
    lo, hi = P.bbox
    floor = min_value * float(np.max(hi - lo))
    pts = [P.centroid]
    while len(pts) < count:
        X = lo + (hi - lo) * rng.random((64, P.dimension))
        X = X[facet_values(P, X).min(axis=1) >= floor]
        pts.extend(X[: count - len(pts)])
    return np.array(pts[:count])


def sup_fnorm(u: SymplecticPotential, h: float | None = None) -> float:
    """Max of ``|F|`` on Gauss points of the polytope (spacing ``diam / 16``)."""
    lo, hi = u.polytope.bbox
    h = float(np.max(hi - lo)) / 16 if h is None else h
    pts = gauss_grid(u.polytope, h).points
    pts = pts[u.in_domain(pts)]
    return float(np.max(curvature_fields(u, pts)[3]))


def probe_directions(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Coordinate axes, the diagonal and ``count`` random unit vectors."""
    dirs = list(np.eye(n))
    if n > 1:
        dirs.append(np.ones(n) / math.sqrt(n))
        for _ in range(count):
            v = rng.standard_normal(n)
            dirs.append(v / np.linalg.norm(v))
    return np.array(dirs)


def _exit(P: DelzantPolytope, x: np.ndarray, d: np.ndarray) -> float:
    rate = P.normals.astype(float) @ d
    lv = facet_values(P, x)
    with np.errstate(divide="ignore"):
        s = np.where(rate < 0, lv / -rate, np.inf)
    return float(s.min())


_DIST_CACHE: "weakref.WeakKeyDictionary[SymplecticPotential, dict]" = weakref.WeakKeyDictionary()


class _Distances:
    """Refined facet distances computed on the source potential.

    Lengths obey ``L~(lam c) = sqrt(lam) L(c)`` exactly, so distances of the
    rescaled potential are ``sqrt(lam)`` times cached source distances.
    """

    def __init__(self, source: SymplecticPotential, lam: float, prune: float = 0.8):
        self.source, self.lam, self.prune = source, lam, prune
        self.cache = _DIST_CACHE.setdefault(source, {})

    def _facet_src(self, x: np.ndarray, k: int) -> float:
        key = (x.tobytes(), k)
        if key not in self.cache:
            self.cache[key] = dist_facet_refined(self.source, x, k)
        return self.cache[key]

    def facet(self, p, k: int) -> float:
        return math.sqrt(self.lam) * self._facet_src(np.asarray(p, float) / self.lam, k)

    def boundary(self, p) -> float:
        """Min over facets; facets whose straight-fan bound exceeds the best
        refined value by more than ``1/prune`` are skipped."""
        x = np.asarray(p, float) / self.lam
        fan = [min(segment_length(self.source, x, t, 1e-9)
                   for t in facet_targets(self.source.polytope, k, x))
               for k in range(self.source.polytope.n_facets)]
        best = np.inf
        for k in np.argsort(fan):
            if self.prune * fan[k] >= best:
                break
            best = min(best, self._facet_src(x, int(k)))
        return math.sqrt(self.lam) * best


class _Collector:
    def __init__(self):
        self.margins: list[float] = []
        self.info: list[dict[str, Any]] = []

    def add(self, margin: float, **info):
        self.margins.append(float(margin))
        self.info.append(info)

    def report(self, lemma, desc, tol, params) -> EstimateReport:
        if not self.margins:
            raise HypothesisError(f"{lemma}: no admissible samples")
        k = int(np.argmin(self.margins))
        witness = {key: (np.asarray(v).tolist() if isinstance(v, np.ndarray) else v)
                   for key, v in self.info[k].items()}
        m = self.margins[k]
        return EstimateReport(lemma_id=lemma, samples=desc, margins=self.margins,
                              min_margin=m, witness=witness, passed=bool(m >= -tol),
                              tolerance=tol, params=params)


def _length_bound(u, X, prm, out: _Collector):
    P, M = u.polytope, prm["M"]
    rng = np.random.default_rng(prm["seed"])
    for p in X:
        for nu in probe_directions(u.dimension, prm["n_directions"], rng):
            L = min(_exit(P, p, nu), _exit(P, p, -nu))
            for frac in prm["fractions"]:
                q = p - frac * L * nu  # segment [q, 2p - q] lies in closed P
                length = segment_length(u, p, q)
                rhs = CORNER_CONSTANT * math.sqrt(M * frac * L)
                out.add(rhs - length, p=p, endpoint=q, lhs=length, rhs=rhs)


def _dist_corner(u, X, prm, out: _Collector):
    M = prm["M"]
    for p in X:
        d_euc = float(euclid_facet_distances(u.polytope, p[None]).min())
        d_g = prm["_dist"].boundary(p)
        rhs = CORNER_CONSTANT * math.sqrt(M * d_euc)
        out.add(rhs - d_g, p=p, lhs=d_g, rhs=rhs, dist_euc=d_euc)


def _directional(u, X, dirs):
    d = u.derivs(X, order=4)
    h = np.einsum("mij,i,j->m", d.hessian, dirs, dirs)
    h1 = np.einsum("mijk,i,j,k->m", d.third, dirs, dirs, dirs)
    h2 = np.einsum("mijkl,i,j,k,l->m", d.fourth, dirs, dirs, dirs, dirs)
    return h, h1, h2


def _curv_ineq(u, X, prm, out: _Collector):
    rng = np.random.default_rng(prm["seed"])
    fnorm = curvature_fields(u, X)[3]
    for nu in probe_directions(u.dimension, prm["n_directions"], rng):
        h, h1, h2 = _directional(u, X, nu)
        lhs = 2 * h1 ** 2 / h ** 3 - h2 / h ** 2  # (1/h)''
        for i, p in enumerate(X):
            out.add(fnorm[i] - lhs[i], p=p, direction=nu, lhs=float(lhs[i]),
                    rhs=float(fnorm[i]))


def _hess_upper(u, X, prm, out: _Collector):
    P, M = u.polytope, prm["M"]
    rng = np.random.default_rng(prm["seed"])
    bound_c = lambda R: max(2 * M / (math.pi * R), 2 * (M / math.pi) ** 2)
    for nu in probe_directions(u.dimension, prm["n_directions"], rng):
        h = np.einsum("mij,i,j->m", u.derivs(X, order=2).hessian, nu, nu)
        for i, p in enumerate(X):
            R = min(_exit(P, p, nu), _exit(P, p, -nu)) / 3.0
            if not R > 0:
                raise HypothesisError("no admissible R at sample")
            rhs = bound_c(R)
            out.add(rhs - h[i], p=p, direction=nu, R=R, lhs=float(h[i]), rhs=rhs)


def _backward_length(u, p, v, t_max, stop):
    """Arc length the geodesic through ``p`` extends backwards inside ``P``.

    Stopping early at facet value ``stop`` only shortens it, which keeps the
    shifted parameter admissible.
    """
    path = geodesic_shoot(u, p, -v, t_max, tol=1e-8, stop_margin=stop)
    return float(path.t[-1]), path.reason


def _unit(u, p, nu):
    H = u.derivs(p[None], order=2).hessian[0]
    return nu / math.sqrt(nu @ H @ nu)


def _sinh_mono(u, X, prm, out: _Collector):
    rng = np.random.default_rng(prm["seed"])
    n = u.dimension
    lo, hi = u.polytope.bbox
    stop = 1e-4 * float(np.max(hi - lo))
    probes = list(np.eye(n)) + [nu / np.linalg.norm(nu) for nu in u.polytope.normals.astype(float)]
    probes = np.array(probes)
    for p in X:
        for nu in probe_directions(n, prm["n_directions"], rng):
            v = _unit(u, p, nu)
            t0, reason = _backward_length(u, p, v, prm["t_back"], stop)
            path = geodesic_shoot(u, p, v, prm["t_max"])
            W = np.linalg.inv(u.derivs(path.points, order=2).hessian)
            t = path.t + t0
            for e in probes:
                r = np.sqrt(np.einsum("mi,mij,mj->m", np.broadcast_to(e, path.points.shape), W,
                                      np.broadcast_to(e, path.points.shape))) / np.sinh(t)
                rel = (r[:-1] - r[1:]) / r[:-1]
                k = int(np.argmin(rel))
                out.add(rel[k], p=p, direction=nu, probe=e, t=float(t[k + 1]), origin=t0,
                        origin_reason=reason, ratio=float(r[k]), next_ratio=float(r[k + 1]))


def _facet_data(u, X, prm):
    """Per sample and facet: ``l_E``, ``u_E^T W u_E`` and the distance estimate."""
    P = u.polytope
    lv = facet_values(P, X)
    W = np.linalg.inv(u.derivs(X, order=2).hessian)
    U = P.normals.astype(float)
    wE = np.einsum("ki,mij,kj->mk", U, W, U)
    facets = prm.get("facets") or range(P.n_facets)
    for i, p in enumerate(X):
        for k in facets:
            yield p, k, lv[i, k], wE[i, k], prm["_dist"].facet(p, k)


def _sinh_sq(u, X, prm, out: _Collector):
    for p, k, _l, w, d in _facet_data(u, X, prm):
        rhs = math.sinh(d) ** 2
        out.add(rhs - w, p=p, facet=k, lhs=float(w), rhs=rhs, dist=d)


def _defining_bound(u, X, prm, out: _Collector):
    for p, k, l, _w, d in _facet_data(u, X, prm):
        rhs = math.cosh(d) - 1.0
        out.add(rhs - l, p=p, facet=k, lhs=float(l), rhs=rhs, dist=d)


def _gen_eigs(Wq: np.ndarray, Wp: np.ndarray) -> np.ndarray:
    L = np.linalg.cholesky(Wp)
    Li = np.linalg.inv(L)
    return np.linalg.eigvalsh(Li @ Wq @ Li.T)


def _hess_ratio(u, X, prm, out: _Collector):
    rng = np.random.default_rng(prm["seed"])
    for p in X:
        alpha = prm["alpha_scale"] * prm["_dist"].boundary(p)
        Wp = np.linalg.inv(u.derivs(p[None], order=2).hessian[0])
        for nu in probe_directions(u.dimension, prm["n_directions"], rng):
            path = geodesic_shoot(u, p, _unit(u, p, nu), alpha * max(prm["fractions"]))
            for frac in prm["fractions"]:
                d = frac * alpha
                if d > path.t[-1]:
                    continue
                q = path.point_at(d)
                mu = _gen_eigs(np.linalg.inv(u.derivs(q[None], order=2).hessian[0]), Wp)
                upper = math.sinh(alpha + d) ** 2 / math.sinh(alpha) ** 2
                lower = math.sinh(alpha - d) ** 2 / math.sinh(alpha) ** 2
                info = dict(p=p, q=q, alpha=alpha, d=d, mu_min=float(mu[0]),
                            mu_max=float(mu[-1]))
                out.add(upper - mu[-1], side="upper", bound=upper, **info)
                out.add(mu[0] - lower, side="lower", bound=lower, **info)


def _circle(n: int, count: int) -> np.ndarray:
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        th = 2 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(th), np.sin(th)])
    v = np.random.default_rng(0).standard_normal((count, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _elliptic_balls(u, X, prm, out: _Collector):
    for p in X:
        alpha = prm["alpha_scale"] * prm["_dist"].boundary(p)
        H = u.derivs(p[None], order=2).hessian[0]
        evals, evecs = np.linalg.eigh(H)
        Hmh = evecs @ np.diag(evals ** -0.5) @ evecs.T  # H^{-1/2}
        for frac in prm["fractions"]:
            beta = frac * alpha
            c = math.sinh(alpha - beta) / math.sinh(alpha)
            C = math.sinh(alpha + beta) / math.sinh(alpha)
            for e in _circle(u.dimension, prm["n_boundary"]):
                x = p + c * beta * (Hmh @ e)  # on the boundary of E(p, c beta)
                length = segment_length(u, p, x)
                out.add(beta - length, p=p, side="inner", point=x, beta=beta, alpha=alpha,
                        lhs=length, rhs=beta)
                path = geodesic_shoot(u, p, Hmh @ e, beta)
                if path.t[-1] < beta * (1 - 1e-12):
                    raise HypothesisError("geodesic ball leaves the polytope; alpha too large")
                q = path.points[-1]
                r = math.sqrt((q - p) @ H @ (q - p))
                out.add(C * beta - r, p=p, side="outer", point=q, beta=beta, alpha=alpha,
                        lhs=r, rhs=C * beta)


_CHECKS: dict[str, Callable] = {
    "LENGTH_BOUND": _length_bound, "DIST_CORNER": _dist_corner, "CURV_INEQ": _curv_ineq,
    "HESS_UPPER": _hess_upper, "SINH_MONO": _sinh_mono, "SINH_SQ": _sinh_sq,
    "DEFINING_BOUND": _defining_bound, "HESS_RATIO": _hess_ratio,
    "ELLIPTIC_BALLS": _elliptic_balls,
}

DEFAULTS: dict[str, Any] = {
    "seed": 0, "tolerance": 1e-6, "n_samples": 6, "n_directions": 2,
    "fractions": (0.25, 0.5, 1.0), "t_max": 1.0, "t_back": 20.0, "alpha_scale": 1.0, "n_boundary": 8,
    "m_levels": 3, "lam": None, "M": None, "normalize": None, "facets": None,
}


def verify_estimate(u: SymplecticPotential, lemma_id: str, samples=None,
                    params: dict[str, Any] | None = None) -> EstimateReport:
    """Check one geometric estimate at ``samples`` (points of ``u``'s polytope).

    Lemmas stated under ``|F| <= 1`` run on ``rescale(u, sup|F|)`` with the
    samples scaled along.  ``M`` defaults to :func:`estimate_M` of the
    potential actually checked.
    """
    if lemma_id not in _CHECKS:
        raise ValueError(f"unknown lemma id {lemma_id!r}; expected one of {', '.join(LEMMAS)}")
    prm = dict(DEFAULTS)
    unknown = set(params or {}) - set(DEFAULTS)
    if unknown:
        raise ValueError(f"unknown parameters {sorted(unknown)}")
    prm.update(params or {})
    if lemma_id in ("HESS_RATIO", "ELLIPTIC_BALLS") and not (params or {}).get("fractions"):
        prm["fractions"] = (0.25, 0.5, 0.75)
    if samples is None:
        X = interior_samples(u.polytope, prm["n_samples"], prm["seed"])
        desc = f"{prm['n_samples']} interior samples, seed {prm['seed']}"
    else:
        X = np.atleast_2d(np.asarray(samples, float)).reshape(-1, u.dimension)
        desc = f"{len(X)} supplied samples"
    if not np.all(u.in_domain(X)):
        raise DomainError("samples must lie in the margin region")
    normalize = prm["normalize"]
    if normalize is None:
        normalize = lemma_id in NEEDS_UNIT_CURVATURE
    lam, source = 1.0, u
    if normalize:
        lam = prm["lam"] if prm["lam"] is not None else sup_fnorm(u)
        u = rescale(u, lam).potential
        X = lam * X
    if lemma_id in ("LENGTH_BOUND", "DIST_CORNER", "HESS_UPPER") and prm["M"] is None:
        prm["M"] = estimate_M(u, levels=prm["m_levels"], seed=prm["seed"]).M_hat
    out = _Collector()
    prm["_dist"] = _Distances(source, lam)
    _CHECKS[lemma_id](u, X, prm, out)
    record = {k: (list(v) if isinstance(v, tuple) else v) for k, v in prm.items()
              if k not in ("normalize", "lam") and not k.startswith("_")}
    record.update(lam=lam, normalized=bool(normalize))
    return out.report(lemma_id, desc, prm["tolerance"], record)


# -- singularity detection -----------------------------------------------------

@dataclass
class SingularityEvent:
    point: np.ndarray
    time: float
    lam: float
    classification: str  # "interior" | "corner" | "bounded"
    m: int
    retained_facets: list[int]
    rescaled_distances: list[float]
    step: int | None = None
    rescaled: RescaledProblem | None = None

    def to_dict(self) -> dict[str, Any]:
        return {"point": [float(a) for a in self.point], "time": self.time, "lam": self.lam,
                "classification": self.classification, "m": self.m,
                "retained_facets": self.retained_facets,
                "rescaled_distances": self.rescaled_distances, "step": self.step,
                "limit": (limit_label(self.m, len(self.point))
                          if self.classification != "bounded" else None)}


def limit_label(m: int, n: int) -> str:
    if m == 0:
        return f"R^{n}"
    return f"(R+)^{m} x R^{n - m}" if m < n else f"(R+)^{m}"


def classify(P: DelzantPolytope, point, lam: float, retain: float = RETAIN_DISTANCE):
    """Retained facets (``lam * Dist_Euc < retain``), their count and the limit type.

    ``"interior"`` when no facet is retained and ``"corner"`` when the
    retained facets meet at a vertex (the model is ``(R+)^m x R^(n-m)``).
    Otherwise the rescaled polytope stays bounded (``lam`` too small for a
    blow-up limit) and the type is ``"bounded"``.
    """
    d = lam * euclid_facet_distances(P, np.asarray(point, float)[None])[0]
    kept = [int(k) for k in np.flatnonzero(d < retain)]
    if not kept:
        kind = "interior"
    else:
        active = np.abs(facet_values(P, P.vertices)) <= 1e-9
        kind = "corner" if np.any(active[:, kept].all(axis=1)) else "bounded"
    return kept, [float(a) for a in d], kind


def detect_singularity(trajectory: Sequence, polytope: DelzantPolytope, threshold: float,
                       potentials: Callable[[Any], SymplecticPotential] | None = None,
                       retain: float = RETAIN_DISTANCE) -> list[SingularityEvent]:
    """Events at records whose ``sup_F`` exceeds ``threshold``.

    ``trajectory`` holds diagnostics records (attributes or mapping keys
    ``t``, ``sup_F``, ``argmax_F``, optionally ``step``).  With
    ``potentials(record)`` given, each event carries the rescaled problem.
    """
    records = list(trajectory)
    if not records:
        raise ValueError("empty trajectory")
    events = []
    for rec in records:
        get = (lambda k: rec[k]) if isinstance(rec, dict) else (lambda k: getattr(rec, k))
        lam = float(get("sup_F"))
        if not lam > threshold:
            continue
        p = np.asarray(get("argmax_F"), float)
        kept, dists, kind = classify(polytope, p, lam, retain)
        step = get("step") if (isinstance(rec, dict) and "step" in rec) or hasattr(rec, "step") else None
        ev = SingularityEvent(point=p, time=float(get("t")), lam=lam,
                              classification=kind,
                              m=len(kept), retained_facets=kept, rescaled_distances=dists,
                              step=step)
        if potentials is not None:
            ev.rescaled = rescale(potentials(rec), lam, point=p, time=ev.time)
        events.append(ev)
    return events


def run_suite(potentials: dict[str, SymplecticPotential], lemmas: Iterable[str] = LEMMAS,
              params: dict[str, Any] | None = None) -> dict[str, dict[str, EstimateReport]]:
    return {name: {lem: verify_estimate(u, lem, params=params) for lem in lemmas}
            for name, u in potentials.items()}
