"""Directional gradient gaps ``V(p, q)`` and sampled estimates of the M-condition constant."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Any

import numpy as np

from .polytope import DelzantPolytope, facet_values
from .potential import DomainError, SymplecticPotential

ADMISSIBLE_TOL = 1e-12


def v_value(u: SymplecticPotential, p, q) -> float:
    """``V(p, q) = nu . (grad u(q) - grad u(p))`` with ``nu = (q - p)/|q - p|``."""
    n = u.dimension
    p = np.asarray(p, float).reshape(n)
    q = np.asarray(q, float).reshape(n)
    dist = np.linalg.norm(q - p)
    if dist == 0:
        raise ValueError("p and q coincide")
    X = np.stack([p, q])
    if not np.all(u.in_domain(X)):
        raise DomainError("p or q outside the margin region")
    g = u.derivs(X, order=1).gradient
    return float((q - p) @ (g[1] - g[0]) / dist)


def admissible(P: DelzantPolytope, p, q, tol: float = ADMISSIBLE_TOL) -> bool:
    """Whether the tripled segment ``(p+q)/2 + t(p-q)``, ``|t| <= 3/2``, lies in closed ``P``."""
    p = np.asarray(p, float).reshape(P.dimension)
    q = np.asarray(q, float).reshape(P.dimension)
    if np.array_equal(p, q):
        raise ValueError("p and q coincide")
    mid = 0.5 * (p + q)
    ends = np.stack([mid + 1.5 * (p - q), mid - 1.5 * (p - q)])
    scale = max(1.0, float(np.abs(P.offsets).max()))
    return bool(np.all(facet_values(P, ends) >= -tol * scale))


@dataclass
class MEstimate:
    M_hat: float
    witness_p: np.ndarray | None
    witness_q: np.ndarray | None
    n_lines: int
    n_pairs: int
    history: list[float] = field(default_factory=list)
    seed: int = 0

    def to_dict(self) -> dict[str, Any]:
        w = (lambda a: None if a is None else [float(v) for v in a])
        return {"M_hat": self.M_hat, "witness_p": w(self.witness_p), "witness_q": w(self.witness_q),
                "n_lines": self.n_lines, "n_pairs": self.n_pairs,
                "history": [float(h) for h in self.history], "seed": self.seed}


def sample_directions(P: DelzantPolytope, n_random: int, rng: np.random.Generator) -> np.ndarray:
    """Axes, facet normals, edge directions and ``n_random`` random unit vectors."""
    n = P.dimension
    dirs = [np.eye(n)[i] for i in range(n)]
    dirs += [u / np.linalg.norm(u) for u in P.normals.astype(float)]
    if n >= 2:
        lv = facet_values(P, P.vertices)
        active = np.abs(lv) <= 1e-9
        for i, j in combinations(range(len(P.vertices)), 2):
            if (active[i] & active[j]).sum() >= n - 1:
                e = P.vertices[j] - P.vertices[i]
                dirs.append(e / np.linalg.norm(e))
        for _ in range(n_random):
            v = rng.standard_normal(n)
            dirs.append(v / np.linalg.norm(v))
    out = []
    for d in dirs:
        d = d if d[np.flatnonzero(np.abs(d) > 1e-12)[0]] > 0 else -d  # V is symmetric in nu
        if not any(np.allclose(d, e, atol=1e-12) for e in out):
            out.append(d)
    return np.array(out)


def _perp_basis(nu: np.ndarray) -> np.ndarray:
    n = len(nu)
    if n == 1:
        return np.zeros((0, 1))
    q, _ = np.linalg.qr(np.column_stack([nu, np.eye(n)]))
    return q[:, 1:n].T


def _chords(P: DelzantPolytope, nu: np.ndarray, n_offsets: int):
    """Lines parallel to ``nu`` through an offset grid; yields ``(start, length)``."""
    B = _perp_basis(nu)
    U = P.normals.astype(float)
    if len(B) == 0:
        offsets = [np.zeros(P.dimension)]
    else:
        proj = P.vertices @ B.T
        lo, hi = proj.min(axis=0), proj.max(axis=0)
        frac = (np.arange(n_offsets) + 0.5) / n_offsets
        offsets = [np.asarray(c) @ B for c in product(*[lo[i] + frac * (hi[i] - lo[i])
                                                         for i in range(len(B))])]
    rate = U @ nu
    for x0 in offsets:
        lv = U @ x0 - P.offsets
        s_lo, s_hi = -np.inf, np.inf
        for k in range(len(rate)):
            if rate[k] > 0:
                s_lo = max(s_lo, -lv[k] / rate[k])
            elif rate[k] < 0:
                s_hi = min(s_hi, -lv[k] / rate[k])
            elif lv[k] < 0:
                s_lo, s_hi = 1.0, 0.0
        if s_hi - s_lo > 1e-9:
            yield x0 + s_lo * nu, s_hi - s_lo


def chord_positions(level: int, base: int = 96) -> np.ndarray:
    """Fractions of a chord sampled at refinement ``level``; nested across levels."""
    uni = np.arange(1, base * 2 ** level) / (base * 2 ** level)
    geo = 2.0 ** (-np.arange(4, 2 * (10 + 2 * level) + 1) / 2.0)
    return np.unique(np.concatenate([uni, geo, 1.0 - geo]))


def _best_on_chord(s: np.ndarray, g: np.ndarray, L: float):
    """Max of ``g[j] - g[i]`` over admissible ``s[i] < s[j]`` on a chord of length ``L``."""
    d = s[None, :] - s[:, None]
    ok = (d > 0) & (2 * s[:, None] - s[None, :] >= -ADMISSIBLE_TOL * L) \
        & (2 * s[None, :] - s[:, None] <= L * (1 + ADMISSIBLE_TOL))
    V = np.where(ok, g[None, :] - g[:, None], -np.inf)
    k = int(np.argmax(V))
    return V.flat[k], divmod(k, len(s)), int(ok.sum())


def estimate_M(u: SymplecticPotential, levels: int = 3, n_random: int = 4, n_offsets: int = 9,
               seed: int = 0, base: int = 96) -> MEstimate:
    """Sup of ``V`` over admissible pairs on chords in sampled directions.

    Each refinement level doubles the uniform chord sampling and extends the
    geometric sequences toward both ends; sample sets are nested, so the
    history is nondecreasing.
    """
    P = u.polytope
    rng = np.random.default_rng(seed)
    dirs = sample_directions(P, n_random, rng)
    chords = [(nu, a, L) for nu in dirs for a, L in _chords(P, nu, n_offsets)]
    best, wp, wq = -np.inf, None, None
    history, n_pairs = [], 0
    for level in range(levels):
        frac = chord_positions(level, base)
        pts, meta = [], []
        for nu, a, L in chords:
            X = a + (frac * L)[:, None] * nu
            keep = u.in_domain(X)
            pts.append(X[keep])
            meta.append((nu, L, frac[keep] * L))
        X = np.concatenate(pts)
        G = u.derivs(X, order=1).gradient
        start, n_pairs = 0, 0
        for (nu, L, s), Xc in zip(meta, pts):
            g = G[start:start + len(s)] @ nu
            start += len(s)
            if len(s) < 2:
                continue
            v, (i, j), cnt = _best_on_chord(s, g, L)
            n_pairs += cnt
            if v > best:
                best, wp, wq = float(v), Xc[i].copy(), Xc[j].copy()
        history.append(best)
    return MEstimate(M_hat=max(best, 0.0), witness_p=wp, witness_q=wq, n_lines=len(chords),
                     n_pairs=n_pairs, history=history, seed=seed)
