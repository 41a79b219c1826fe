"""Metric, curvature and Riemannian lengths of ``g = u_ij dx dx + u^ij dxi dxi``."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .polytope import DelzantPolytope, facet_values
from .potential import DomainError, SymplecticPotential, as_points, _checked

GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


class GeodesicError(RuntimeError):
    pass


def inverse_hessian_derivatives(H: np.ndarray, T: np.ndarray, Q: np.ndarray):
    """``W = H^-1`` and its first and second derivatives from ``u``'s derivatives.

    ``dW[..., a, b, k] = -W^ac u_cdk W^db``; ``ddW[..., a, b, k, l]`` follows
    from differentiating once more.
    """
    W = np.linalg.inv(H)
    W = 0.5 * (W + np.swapaxes(W, -1, -2))
    X = np.einsum("mac,mcdk->madk", W, T)  # (W T_k)^a_d
    dW = -np.einsum("madk,mdb->mabk", X, W)
    term1 = np.einsum("mafl,mfdk,mdb->mabkl", X, X, W, optimize=True)
    term3 = np.einsum("mac,mcdkl,mdb->mabkl", W, Q, W, optimize=True)
    ddW = term1 + np.swapaxes(term1, -1, -2) - term3
    return W, dW, ddW


@dataclass
class CurvatureReport:
    """Pointwise curvature data; arrays carry a leading point axis for batches."""

    point: np.ndarray
    hessian: np.ndarray
    inverse_hessian: np.ndarray
    F: np.ndarray  # F^{ab}_{kl} = -d_k d_l u^{ab}
    fnorm: np.ndarray
    scalar: np.ndarray
    det_J: np.ndarray

    def records(self) -> list[dict[str, float]]:
        """Flat rows: coordinates, A, |F|, det J and Hessian entries."""
        pts = np.atleast_2d(self.point)
        H = self.hessian.reshape((len(pts),) + self.hessian.shape[-2:])
        A, F, D = (np.atleast_1d(a) for a in (self.scalar, self.fnorm, self.det_J))
        n = pts.shape[1]
        rows = []
        for i in range(len(pts)):
            row = {f"x{j + 1}": float(pts[i, j]) for j in range(n)}
            row.update(A=float(A[i]), F_norm=float(F[i]), det_J=float(D[i]))
            for a in range(n):
                for b in range(a, n):
                    row[f"u{a + 1}{b + 1}"] = float(H[i, a, b])
            rows.append(row)
        return rows


def curvature_fields(u: SymplecticPotential, X: np.ndarray, basis=None, singular_part=None):
    """Batched ``(H, W, ddW, |F|, A, det H)`` at points ``X`` (no domain check)."""
    d = u.derivs(X, order=4, basis=basis, singular_part=singular_part)
    H = 0.5 * (d.hessian + np.swapaxes(d.hessian, -1, -2))
    if np.any(np.linalg.eigvalsh(H)[:, 0] <= 0):
        raise DomainError("Hessian is not positive definite")
    W, _dW, ddW = inverse_hessian_derivatives(H, d.third, d.fourth)
    A = -np.einsum("mijij->m", ddW)
    f2 = np.einsum("mabcd,mcdab->m", ddW, ddW)
    fnorm = np.sqrt(np.maximum(f2, 0.0))
    return H, W, ddW, fnorm, A, np.linalg.det(H)


def scalar_curvature(u: SymplecticPotential, X: np.ndarray, basis=None, singular_part=None):
    return curvature_fields(u, X, basis=basis, singular_part=singular_part)[4]


def curvature_at(u: SymplecticPotential, x) -> CurvatureReport:
    """Curvature tensor, its norm, scalar curvature and ``det(u_ij)`` at ``x``."""
    X, single = _checked(u, x)
    H, W, ddW, fnorm, A, det = curvature_fields(u, X)
    rep = CurvatureReport(point=X, hessian=H, inverse_hessian=W, F=-ddW, fnorm=fnorm,
                          scalar=A, det_J=det)
    if single:
        rep = CurvatureReport(*(getattr(rep, k)[0] for k in
                                ("point", "hessian", "inverse_hessian", "F", "fnorm",
                                 "scalar", "det_J")))
    return rep


def metric_fnorm(H: np.ndarray, W: np.ndarray, ddW: np.ndarray) -> np.ndarray:
    """``|F|`` by full contraction with the metric (equal to the trace form)."""
    val = np.einsum("mijkl,mabcd,mia,mjb,mkc,mld->m", ddW, ddW, H, H, W, W, optimize=True)
    return np.sqrt(np.maximum(val, 0.0))


def scalar_curvature_cofactor(u: SymplecticPotential, x):
    """``A = -U^ij (1/det u_kl)_ij`` with ``U`` the cofactor matrix of ``u_ij``."""
    X, single = _checked(u, x)
    d = u.derivs(X, order=4)
    H = 0.5 * (d.hessian + np.swapaxes(d.hessian, -1, -2))
    if np.any(np.linalg.eigvalsh(H)[:, 0] <= 0):
        raise DomainError("Hessian is not positive definite")
    T, Q = d.third, d.fourth
    D = np.linalg.det(H)
    W = np.linalg.inv(H)
    U = D[:, None, None] * W
    X_ = np.einsum("mac,mcdk->madk", W, T)
    g = np.einsum("maak->mk", X_)  # d_k log det
    hlog = np.einsum("mabij,mba->mij", Q, W) - np.einsum("madj,mdai->mij", X_, X_)
    Dij = D[:, None, None] * (g[:, :, None] * g[:, None, :] + hlog)
    Di = D[:, None] * g
    Gij = -Dij / D[:, None, None] ** 2 + 2 * Di[:, :, None] * Di[:, None, :] / D[:, None, None] ** 3
    A = -np.einsum("mij,mij->m", U, Gij)
    return float(A[0]) if single else A


# -- lengths -------------------------------------------------------------------

def _segment_integrand(u: SymplecticPotential, a: np.ndarray, b: np.ndarray, s: np.ndarray):
    d = b - a
    X = a + s[:, None] * d
    H = u.derivs(X, order=2).hessian
    return np.sqrt(np.maximum(np.einsum("mi,mij,mj->m", np.broadcast_to(d, X.shape), H,
                                        np.broadcast_to(d, X.shape)), 0.0))


def _panel_length(u, a, b, lo, hi):
    # s = (1 - cos(pi tau)) / 2 removes inverse-square-root endpoint singularities
    tau = lo + (hi - lo) * 0.5 * (GL_NODES + 1.0)
    s = 0.5 * (1.0 - np.cos(np.pi * tau))
    jac = 0.5 * np.pi * np.sin(np.pi * tau)
    vals = _segment_integrand(u, a, b, s) * jac
    return 0.5 * (hi - lo) * float(GL_WEIGHTS @ vals)


def segment_length(u: SymplecticPotential, a, b, rtol: float = 1e-10, max_depth: int = 30) -> float:
    """Riemannian length of the straight segment ``[a, b]`` in the closed polytope.

    Endpoints may lie on the boundary; the integrand is evaluated only at
    interior Gauss nodes.  Panels are bisected until successive estimates agree
    to ``rtol``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.allclose(a, b):
        return 0.0
    stack = [(0.0, 1.0, _panel_length(u, a, b, 0.0, 1.0), 0)]
    total = 0.0
    while stack:
        lo, hi, est, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        left = _panel_length(u, a, b, lo, mid)
        right = _panel_length(u, a, b, mid, hi)
        if abs(left + right - est) <= rtol * max(abs(left + right), 1e-300) or depth >= max_depth:
            total += left + right
        else:
            stack.append((mid, hi, right, depth + 1))
            stack.append((lo, mid, left, depth + 1))
    return total


def riemannian_length(u: SymplecticPotential, polyline, rtol: float = 1e-10) -> float:
    """Length of a polyline whose interior lies in the margin region."""
    pts, _ = as_points(u.dimension, polyline)
    if len(pts) < 2:
        raise ValueError("polyline needs at least two points")
    P = u.polytope
    lv = facet_values(P, pts).min(axis=1)
    if np.any(lv < -1e-12):
        raise DomainError("polyline leaves the polytope")
    interior_pts = pts[1:-1]
    if len(interior_pts) and not np.all(u.in_domain(interior_pts)):
        raise DomainError("polyline leaves the margin region")
    if u.margin > 0 and np.any(lv < u.margin - 1e-12):
        raise DomainError("polyline leaves the margin region")
    return float(sum(segment_length(u, pts[i], pts[i + 1], rtol) for i in range(len(pts) - 1)))


# -- geodesics -----------------------------------------------------------------

@dataclass
class GeodesicPath:
    t: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    x0: np.ndarray
    v0: np.ndarray
    reason: str  # "time reached" | "boundary"
    speed_drift: float = 0.0

    def point_at(self, s: float) -> np.ndarray:
        """Cubic Hermite interpolation of the path at arc length ``s``."""
        if not self.t[0] <= s <= self.t[-1]:
            raise ValueError("arc length outside the integrated range")
        i = int(np.clip(np.searchsorted(self.t, s) - 1, 0, len(self.t) - 2))
        t0, t1 = self.t[i], self.t[i + 1]
        hstep = t1 - t0
        r = (s - t0) / hstep
        h00 = 2 * r ** 3 - 3 * r ** 2 + 1
        h10 = r ** 3 - 2 * r ** 2 + r
        h01 = -2 * r ** 3 + 3 * r ** 2
        h11 = r ** 3 - r ** 2
        return (h00 * self.points[i] + h10 * hstep * self.velocities[i]
                + h01 * self.points[i + 1] + h11 * hstep * self.velocities[i + 1])


def _geodesic_rhs(u: SymplecticPotential, y: np.ndarray) -> np.ndarray:
    n = u.dimension
    x, v = y[:n], y[n:]
    d = u.derivs(x[None], order=3)
    H, T = d.hessian[0], d.third[0]
    acc = -0.5 * np.linalg.solve(H, np.einsum("ijl,i,j->l", T, v, v))
    return np.concatenate([v, acc])


def _rk4(u, y, h):
    k1 = _geodesic_rhs(u, y)
    k2 = _geodesic_rhs(u, y + 0.5 * h * k1)
    k3 = _geodesic_rhs(u, y + 0.5 * h * k2)
    k4 = _geodesic_rhs(u, y + h * k3)
    return y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def unit_speed(u: SymplecticPotential, x, v) -> np.ndarray:
    """Rescale ``v`` to unit length in the metric ``u_ij`` at ``x``."""
    x = np.asarray(x, float).reshape(u.dimension)
    v = np.asarray(v, float).reshape(u.dimension)
    H = u.derivs(x[None], order=2).hessian[0]
    return v / np.sqrt(v @ H @ v)


def geodesic_shoot(u: SymplecticPotential, x0, v0, t_max: float, tol: float = 1e-10,
                   h0: float = 1e-2, stop_margin: float | None = None,
                   h_min: float = 1e-12) -> GeodesicPath:
    """Integrate ``x'' + Gamma(x', x') = 0`` with ``Gamma^k_ij = u^kl u_ijl / 2``.

    Classical RK4 with step doubling; the local error is kept below ``tol``.
    Integration stops when the next point would leave the region
    ``min_k l_k >= stop_margin`` (default: the potential's margin, or 1e-6).
    """
    n = u.dimension
    x0 = np.asarray(x0, float).reshape(n)
    v0 = np.asarray(v0, float).reshape(n)
    stop = u.margin if stop_margin is None else stop_margin
    stop = stop if stop > 0 else 1e-6
    if facet_values(u.polytope, x0).min() < stop:
        raise DomainError("start point outside the margin region")
    y = np.concatenate([x0, v0])
    ts, ys = [0.0], [y.copy()]
    t, h = 0.0, h0
    reason = "time reached"
    while t < t_max - 1e-15:
        h = min(h, t_max - t)
        ok_domain = True
        try:
            full = _rk4(u, y, h)
            half = _rk4(u, _rk4(u, y, 0.5 * h), 0.5 * h)
            ok_domain = (facet_values(u.polytope, full[:n]).min() >= stop
                         and facet_values(u.polytope, half[:n]).min() >= stop)
        except (DomainError, FloatingPointError, np.linalg.LinAlgError):
            ok_domain = False
        if not ok_domain or not np.all(np.isfinite(half)):
            if h < 1e-6:
                reason = "boundary"
                break
            h *= 0.5
            continue
        err = float(np.max(np.abs(half - full))) / 15.0
        if err <= tol:
            y = half + (half - full) / 15.0
            t += h
            ts.append(t)
            ys.append(y.copy())
            h *= min(2.0, 0.9 * (tol / max(err, 1e-300)) ** 0.2)
        else:
            h *= max(0.2, 0.9 * (tol / err) ** 0.2)
            if h < h_min:
                raise GeodesicError("step size underflow near the boundary")
    Y = np.array(ys)
    pts, vel = Y[:, :n], Y[:, n:]
    H = u.derivs(pts, order=2).hessian
    speed = np.einsum("mi,mij,mj->m", vel, H, vel)
    return GeodesicPath(t=np.array(ts), points=pts, velocities=vel, x0=x0, v0=v0,
                        reason=reason, speed_drift=float(np.max(np.abs(speed - speed[0]))))


# -- distances -----------------------------------------------------------------

def _ray_exit(P: DelzantPolytope, x: np.ndarray, d: np.ndarray) -> tuple[float, int]:
    lv = facet_values(P, x)
    rate = P.normals.astype(float) @ d
    with np.errstate(divide="ignore"):
        s = np.where(rate < 0, lv / -rate, np.inf)
    k = int(np.argmin(s))
    return float(s[k]), k


def facet_targets(P: DelzantPolytope, k: int, x: np.ndarray) -> np.ndarray:
    """Fan of points on facet ``k``: the foot of the perpendicular (when on the
    facet), the facet centroid, and points between them and each facet vertex."""
    u = P.normals[k].astype(float)
    lv_all = facet_values(P, P.vertices)
    verts = P.vertices[np.abs(lv_all[:, k]) <= 1e-9]
    foot = x - facet_values(P, x)[k] * u / (u @ u)
    centre = verts.mean(axis=0)
    targets = [centre]
    if facet_values(P, foot).min() >= -1e-12:
        targets.insert(0, foot)
    base = targets[0]
    for v in verts:
        targets.append(0.5 * (base + v))
        targets.append(v)
    return np.array(targets)


def dist_boundary_riemannian(u: SymplecticPotential, x, facet: int | None = None,
                             rtol: float = 1e-9) -> float:
    """Upper bound on ``Dist_g(x, E)`` (``E`` a facet, or all of the boundary).

    Minimum Riemannian length over a fan of straight segments from ``x`` to
    the facet(s); straight segments are admissible curves, so the result is
    never below the true distance.
    """
    P = u.polytope
    x = np.asarray(x, float).reshape(P.dimension)
    if not u.in_domain(x[None])[0]:
        raise DomainError("point outside the margin region")
    facets = range(P.n_facets) if facet is None else [facet]
    best = np.inf
    for k in facets:
        for target in facet_targets(P, k, x):
            best = min(best, segment_length(u, x, target, rtol))
    return float(best)


@lru_cache(maxsize=8)
def _curve_quadrature(n_quad: int):
    tau, w = np.polynomial.legendre.leggauss(n_quad)
    tau, w = 0.5 * (tau + 1.0), 0.5 * w
    # s = (1 - cos pi tau)/2 absorbs the 1/sqrt(l) endpoint singularity
    return 0.5 * (1.0 - np.cos(np.pi * tau)), 0.5 * np.pi * np.sin(np.pi * tau) * w


def curve_length(u: SymplecticPotential, x, y, coeffs, n_quad: int = 64) -> float:
    """Length of ``c(s) = x + s(y - x) + sum_j a_j sin(j pi s)``, ``s`` in [0, 1].

    Returns ``inf`` if a quadrature node leaves the open polytope.
    """
    x, y = np.asarray(x, float), np.asarray(y, float)
    A = np.asarray(coeffs, float).reshape(-1, len(x))
    s, ds = _curve_quadrature(n_quad)
    j = np.arange(1, len(A) + 1)
    X = x + s[:, None] * (y - x) + np.sin(np.pi * np.outer(s, j)) @ A
    V = (y - x) + (np.pi * j * np.cos(np.pi * np.outer(s, j))) @ A
    if not np.all(u.in_domain(X)):
        return np.inf
    H = u.derivs(X, order=2).hessian
    return float(np.sqrt(np.maximum(np.einsum("mi,mij,mj->m", V, H, V), 0.0)) @ ds)


def dist_facet_refined(u: SymplecticPotential, x, facet: int, modes: int = 3,
                       n_quad: int = 64) -> float:
    """Tighter upper bound on ``Dist_g(x, E_facet)`` by optimising a curve.

    Starts from the best straight segment of the fan and lets the endpoint
    slide on the facet while ``modes`` sine modes bend the curve (Powell).
    The final length is re-evaluated with twice as many quadrature nodes.
    """
    from scipy.optimize import minimize

    P = u.polytope
    x = np.asarray(x, float).reshape(P.dimension)
    if not u.in_domain(x[None])[0]:
        raise DomainError("point outside the margin region")
    targets = facet_targets(P, facet, x)
    lengths = [segment_length(u, x, t, 1e-9) for t in targets]
    y0 = targets[int(np.argmin(lengths))]
    best = float(min(lengths))
    n = P.dimension
    if n == 1:
        return best
    normal = P.normals[facet].astype(float)
    T = np.linalg.svd(normal[None])[2][1:]  # tangent basis of the facet

    def endpoint(z):
        return y0 + z[: n - 1] @ T

    def objective(z):
        y = endpoint(z)
        if facet_values(P, y).min() < -1e-12:
            return 1e3
        val = curve_length(u, x, y, z[n - 1:], n_quad)
        return val if np.isfinite(val) else 1e3

    res = minimize(objective, np.zeros(n - 1 + modes * n), method="Powell",
                   options={"xtol": 1e-8, "ftol": 1e-12})
    y = endpoint(res.x)
    if facet_values(P, y).min() < -1e-12:
        return best
    fine = curve_length(u, x, y, res.x[n - 1:], 2 * n_quad)
    return float(min(best, fine))


def dist_boundary_refined(u: SymplecticPotential, x, modes: int = 3) -> float:
    """``min`` over facets of :func:`dist_facet_refined`."""
    return min(dist_facet_refined(u, x, k, modes) for k in range(u.polytope.n_facets))
