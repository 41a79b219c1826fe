"""Calabi flow ``du/dt = Abar - A`` acting on the smooth part of the potential.

The smooth part ``f`` lives on the nodes of a bounding-box spline grid.  Nodes
with ``min_k l_k >= margin_delta`` are evolved by ``df/dt = Abar - A``.  Held
nodes next to them move with the cubic extrapolation of that velocity, so the
spline stays a smooth extension; held nodes further out keep their values.
Energies and curvature
diagnostics are sampled on the evolved nodes.  Time stepping is explicit:
either forward Euler capped by the spectral radius of the linearised operator,
or a damped second-order Runge-Kutta-Chebyshev scheme whose stage count grows
with ``sqrt(dt * rho)``.  Every step is accepted only if ``u`` stays convex
and the Calabi energy does not increase.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
from scipy import sparse

from .geometry import inverse_hessian_derivatives
from .mcondition import estimate_M
from .polytope import (QuadratureGrid, build_grid, facet_measures, facet_values, gauss_grid,
                       volume)
from .potential import SymplecticPotential, _guillemin, save_checkpoint
from .spline import GridSpline

EXTRAPOLATION = (4.0, -6.0, 4.0, -1.0)
RKC_DAMPING = 4.0  # strong damping: stiff modes shrink by at least 0.42 per step


@dataclass
class FlowConfig:
    grid_h: float = 1 / 64
    margin_delta: float | None = None  # default: grid_h / 2
    t_end: float = 1.0
    dt_init: float = 1e-4
    dt_max: float = 2e-3
    dt_min: float = 1e-12
    sup_F_threshold: float = 1e3
    convergence_tol: float = 0.05
    checkpoint_every: int = 0
    scheme: str = "rkc"
    boundary: str = "extrapolate"
    growth: float = 1.5
    step_tol: float | None = 1e-5
    max_steps: int = 100000
    rho_every: int = 20
    mhat_every: int = 1
    seed: int = 0

    @property
    def delta(self) -> float:
        return 0.5 * self.grid_h if self.margin_delta is None else self.margin_delta

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "FlowConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown flow config keys: {sorted(unknown)}")
        cfg = cls(**data)
        if cfg.scheme not in ("rkc", "euler"):
            raise ValueError("scheme must be 'rkc' or 'euler'")
        if cfg.boundary not in ("extrapolate", "freeze"):
            raise ValueError("boundary must be 'extrapolate' or 'freeze'")
        if cfg.grid_h <= 0 or cfg.t_end < 0 or cfg.dt_init <= 0 or cfg.delta <= 0:
            raise ValueError("grid_h, dt_init and margin_delta must be positive, t_end nonnegative")
        return cfg

    @classmethod
    def load(cls, path) -> "FlowConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# -- averages and energies -------------------------------------------------------

def abar_identity(P) -> float:
    """``Abar = 2 sigma(dP) / Vol(P)``, exact data of the polytope."""
    return float(2.0 * facet_measures(P).sum() / volume(P))


def _a_and_f(u: SymplecticPotential, X, basis=None, singular_part=None, need_f=False):
    d = u.derivs(X, order=4, basis=basis, singular_part=singular_part)
    H = 0.5 * (d.hessian + np.swapaxes(d.hessian, -1, -2))
    W, _dW, ddW = inverse_hessian_derivatives(H, d.third, d.fourth)
    A = -np.einsum("mijij->m", ddW)
    if not need_f:
        return A, H
    fn = np.sqrt(np.maximum(np.einsum("mabcd,mcdab->m", ddW, ddW), 0.0))
    return A, H, W, fn


def average_A(u: SymplecticPotential, grid: QuadratureGrid) -> float:
    """Quadrature average of the scalar curvature over the grid."""
    A, H = _a_and_f(u, grid.points)
    if np.any(np.linalg.eigvalsh(H)[:, 0] <= 0):
        raise ValueError("Hessian degenerate at a grid point")
    return float(grid.weights @ A / grid.weights.sum())


def calabi_energy(u: SymplecticPotential, grid: QuadratureGrid, abar: float) -> float:
    """``int (A - Abar)^2 dmu`` by grid quadrature."""
    A, H = _a_and_f(u, grid.points)
    if np.any(np.linalg.eigvalsh(H)[:, 0] <= 0):
        raise ValueError("Hessian degenerate at a grid point")
    return float(grid.weights @ (A - abar) ** 2)


def _lattice_diff(F: np.ndarray, ok: np.ndarray, axis: int, h: float, order: int):
    """First or second derivative along ``axis`` of a field on a lattice.

    Central three-point stencils where both neighbours exist, second-order
    one-sided stencils otherwise; entries without a usable stencil are NaN.
    """
    if order == 1:
        central, one_sided = (-0.5, 0.0, 0.5), (-1.5, 2.0, -0.5)
    else:
        central, one_sided = (1.0, -2.0, 1.0), (2.0, -5.0, 4.0, -1.0)
    n = F.shape[axis]
    Fm = np.moveaxis(np.where(ok, F, 0.0), axis, 0)
    okm = np.moveaxis(ok, axis, 0)
    out = np.full(Fm.shape, np.nan)
    for i in range(n):
        for offs, coef, sign in ((range(-1, 2), central, 1), (range(len(one_sided)), one_sided, 1),
                                 (range(len(one_sided)), one_sided, -1)):
            idx = [i + sign * o for o in offs]
            if min(idx) < 0 or max(idx) >= n:
                continue
            avail = np.all([okm[k] for k in idx], axis=0) & okm[i] & np.isnan(out[i])
            val = sum(c * Fm[k] for c, k in zip(coef, idx)) / h ** order
            out[i] = np.where(avail, val, out[i])
    return np.moveaxis(out, 0, axis)


def _on_lattice(grid: QuadratureGrid, values: np.ndarray):
    F = np.zeros(grid.shape)
    ok = np.zeros(grid.shape, dtype=bool)
    idx = tuple(grid.index.T)
    F[idx] = values
    ok[idx] = True
    return F, ok, idx


def a_gradient(A: np.ndarray, grid: QuadratureGrid) -> np.ndarray:
    """Euclidean gradient of a grid field by differencing along the lattice axes."""
    F, ok, idx = _on_lattice(grid, A)
    return np.stack([_lattice_diff(F, ok, i, grid.h, 1)[idx] for i in range(len(grid.shape))], axis=1)


def a_hessian(A: np.ndarray, grid: QuadratureGrid) -> np.ndarray:
    """Hessian of a grid field; mixed entries difference the first derivatives."""
    F, ok, idx = _on_lattice(grid, A)
    n = len(grid.shape)
    out = np.empty((len(A), n, n))
    for i in range(n):
        out[:, i, i] = _lattice_diff(F, ok, i, grid.h, 2)[idx]
        Di = _lattice_diff(F, ok, i, grid.h, 1)
        oki = ~np.isnan(Di)
        for j in range(i):
            out[:, i, j] = out[:, j, i] = _lattice_diff(Di, oki, j, grid.h, 1)[idx]
    return out


def energy_decay_rate(u: SymplecticPotential, grid: QuadratureGrid) -> float:
    """``-2 int A_ij u^ia A_ab u^bj dmu`` with ``A_ij`` from differences of the grid field."""
    if not grid.lattice:
        raise ValueError("decay rate needs a lattice grid")
    if min(grid.shape) < 5:
        raise ValueError("grid too coarse for second differences of A")
    A, H = _a_and_f(u, grid.points)
    Ah = a_hessian(A, grid)
    if np.isnan(Ah).any():
        raise ValueError("grid too thin for second differences of A at some points")
    M = np.einsum("mij,mjk->mik", Ah, np.linalg.inv(H))
    return float(-2.0 * grid.weights @ np.einsum("mik,mki->m", M, M))


# -- state ---------------------------------------------------------------------

class FlowContext:
    """Static per-run data: update mask, spline bases and cached ``u0`` derivatives."""

    def __init__(self, u: SymplecticPotential, lattice: QuadratureGrid, egrid: QuadratureGrid,
                 abar: float, delta: float, boundary: str = "extrapolate"):
        spline = u.smooth
        if not isinstance(spline, GridSpline):
            raise TypeError("the flow evolves a grid-sampled smooth part")
        self.polytope = u.polytope
        self.singular = u.singular
        self.margin = u.margin
        self.lattice = lattice
        self.egrid = egrid
        self.abar = abar
        self.lo, self.h, self.shape = spline.lo, spline.h, spline.shape
        nodes = spline.nodes()
        self.update = facet_values(u.polytope, nodes).min(axis=1) >= delta - 1e-12
        self.nodes = nodes[self.update]
        self.extension = self._extension(nodes, boundary)
        self.node_basis = spline.basis(self.nodes, 4)
        self.node_u0 = _guillemin(u.polytope, self.nodes, 4) if u.singular else None
        if not np.array_equal(lattice.points, self.nodes):
            raise ValueError("lattice grid must consist of the update nodes")
        self.quad_basis = spline.basis(egrid.points, 4)
        self.quad_u0 = _guillemin(u.polytope, egrid.points, 4) if u.singular else None

    def _extension(self, nodes: np.ndarray, boundary: str):
        """Sparse map from update-node velocities to held-node velocities.

        A held node whose next four lattice neighbours along some axis
        direction are all update nodes gets the cubic extrapolation along that
        direction, averaged over all such directions.  Other held nodes stay
        fixed.
        """
        n = nodes.shape[1]
        total = len(self.update)
        if boundary == "freeze":
            return sparse.csr_matrix((total, total))
        grid_idx = np.indices(self.shape).reshape(n, -1).T
        flat = np.ravel_multi_index(grid_idx.T, self.shape)
        upd = np.zeros(self.shape, dtype=bool)
        upd.flat[flat[self.update]] = True
        rows, cols, vals = [], [], []
        for node in np.flatnonzero(~self.update):
            idx = grid_idx[node]
            dirs = []
            for axis in range(n):
                for sign in (1, -1):
                    pts = [idx + sign * k * np.eye(n, dtype=int)[axis] for k in range(1, 5)]
                    if all(np.all(p >= 0) and np.all(p < self.shape) and upd[tuple(p)] for p in pts):
                        dirs.append([np.ravel_multi_index(tuple(p), self.shape) for p in pts])
            for d in dirs:
                for c, j in zip(EXTRAPOLATION, d):
                    rows.append(node)
                    cols.append(j)
                    vals.append(c / len(dirs))
        return sparse.csr_matrix((vals, (rows, cols)), shape=(total, total))

    def potential(self, values: np.ndarray) -> SymplecticPotential:
        return SymplecticPotential(self.polytope, GridSpline(self.lo, self.h, values.reshape(self.shape)),
                                   singular=self.singular, margin=self.margin)

    def rhs(self, values: np.ndarray) -> np.ndarray:
        """``Abar - A`` on the update nodes, zero on held nodes."""
        u = self.potential(values)
        A, _ = _a_and_f(u, self.nodes, self.node_basis, self.node_u0)
        out = np.zeros(values.size)
        out[self.update] = self.abar - A
        return out + self.extension @ out

    def quad_fields(self, values: np.ndarray):
        u = self.potential(values)
        return _a_and_f(u, self.egrid.points, self.quad_basis, self.quad_u0, need_f=True)

    def node_a(self, values: np.ndarray) -> np.ndarray:
        return _a_and_f(self.potential(values), self.nodes, self.node_basis, self.node_u0)[0]

    def energy(self, values: np.ndarray) -> tuple[float, float]:
        """Calabi energy and minimum Hessian eigenvalue over the quadrature points."""
        A, H = _a_and_f(self.potential(values), self.egrid.points, self.quad_basis, self.quad_u0)
        eig = np.linalg.eigvalsh(H)[:, 0].min()
        return float(self.egrid.weights @ (A - self.abar) ** 2), float(eig)

    def spectral_radius(self, values: np.ndarray, iters: int = 40, seed: int = 0) -> float:
        """Largest ``|eigenvalue|`` of the linearised right-hand side (power iteration)."""
        rng = np.random.default_rng(seed)
        v = np.zeros(values.size)
        v[self.update] = rng.standard_normal(int(self.update.sum()))
        v /= np.linalg.norm(v)
        base = self.rhs(values)
        eps = 1e-7 * max(1.0, float(np.abs(values).max()))
        rho = 0.0
        for _ in range(iters):
            jv = (self.rhs(values + eps * v) - base) / eps
            rho = float(np.linalg.norm(jv))
            if rho == 0:
                return 0.0
            v = jv / rho
        return rho


@dataclass
class FlowState:
    t: float
    u: SymplecticPotential
    abar: float
    grid: QuadratureGrid
    dt: float
    context: FlowContext = field(repr=False)
    energy: float = 0.0
    rho: float = 0.0

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.u.smooth.values).ravel()


def initial_state(u: SymplecticPotential, config: FlowConfig | None = None,
                  abar: float | None = None) -> FlowState:
    """Wrap a potential for the flow; the spline grid of ``u`` is used as is."""
    config = config or FlowConfig()
    grid = build_grid(u.polytope, u.smooth.h, config.delta, offset=0.0)
    egrid = gauss_grid(u.polytope, u.smooth.h)
    abar = abar_identity(u.polytope) if abar is None else abar
    ctx = FlowContext(u, grid, egrid, abar, config.delta, config.boundary)
    E, eig = ctx.energy(ctx_values(u))
    if eig <= 0:
        raise ValueError("initial potential is not convex on the quadrature grid")
    return FlowState(t=0.0, u=u, abar=abar, grid=grid, dt=config.dt_init, context=ctx, energy=E)


def ctx_values(u: SymplecticPotential) -> np.ndarray:
    return np.array(u.smooth.values, dtype=float).ravel()


# -- time stepping ---------------------------------------------------------------

def rkc_stages(dt: float, rho: float, eps: float = RKC_DAMPING) -> int:
    """Stages needed so the stability interval ``[-beta(s), 0]`` covers ``dt * rho``."""
    w0, w1, _a, _b = _rkc_coefficients(200, eps)
    c = (w0 + 1) / w1 / 200 ** 2  # beta(s) ~ c s^2
    return max(2, 1 + int(np.ceil(np.sqrt(dt * rho / c))))


def _rkc_coefficients(s: int, eps: float = RKC_DAMPING):
    w0 = 1.0 + eps / s ** 2
    T = np.zeros(s + 1)
    dT = np.zeros(s + 1)
    ddT = np.zeros(s + 1)
    T[0], T[1], dT[1] = 1.0, w0, 1.0
    for j in range(2, s + 1):
        T[j] = 2 * w0 * T[j - 1] - T[j - 2]
        dT[j] = 2 * T[j - 1] + 2 * w0 * dT[j - 1] - dT[j - 2]
        ddT[j] = 4 * dT[j - 1] + 2 * w0 * ddT[j - 1] - ddT[j - 2]
    w1 = dT[s] / ddT[s]
    b = np.empty(s + 1)
    b[2:] = ddT[2:] / dT[2:] ** 2
    b[0] = b[1] = b[2]
    a = 1.0 - b * T
    return w0, w1, a, b


def rkc_step(rhs, y0: np.ndarray, dt: float, s: int, f0: np.ndarray | None = None) -> np.ndarray:
    """One step of the second-order damped Runge-Kutta-Chebyshev method."""
    s = max(s, 2)
    w0, w1, a, b = _rkc_coefficients(s)
    f0 = rhs(y0) if f0 is None else f0
    y_prev2 = y0
    y_prev = y0 + b[1] * w1 * dt * f0
    for j in range(2, s + 1):
        mu = 2 * b[j] * w0 / b[j - 1]
        nu = -b[j] / b[j - 2]
        mu_t = 2 * b[j] * w1 / b[j - 1]
        gamma_t = -a[j - 1] * mu_t
        y = ((1 - mu - nu) * y0 + mu * y_prev + nu * y_prev2
             + mu_t * dt * rhs(y_prev) + gamma_t * dt * f0)
        y_prev2, y_prev = y_prev, y
    return y_prev


@dataclass
class StepResult:
    state: FlowState
    accepted: bool
    reason: str = ""
    stages: int = 1
    error: float = 0.0  # scaled local error estimate (rkc only)


def step(state: FlowState, dt: float, scheme: str = "rkc", tol: float | None = None) -> StepResult:
    """Advance by ``dt``; rejected if convexity fails or the energy increases.

    With ``scheme="rkc"`` and a ``tol``, the step is also rejected when the
    embedded local error estimate exceeds ``tol`` in the scaled RMS norm.
    """
    ctx = state.context
    y0 = state.values
    rho = state.rho if state.rho > 0 else ctx.spectral_radius(y0)
    err = 0.0
    try:
        with np.errstate(all="raise"):
            if scheme == "euler":
                stages = 1
                y = y0 + dt * ctx.rhs(y0)
            else:
                stages = rkc_stages(dt, 1.2 * rho)
                f0 = ctx.rhs(y0)
                y = rkc_step(ctx.rhs, y0, dt, stages, f0)
                if tol is not None:
                    est = (12.0 * (y0 - y) + 6.0 * dt * (f0 + ctx.rhs(y))) / 15.0
                    scale = tol * (1.0 + np.maximum(np.abs(y0), np.abs(y)))
                    err = float(np.sqrt(np.mean((est / scale) ** 2)))
            E, eig = ctx.energy(y)
    except (FloatingPointError, np.linalg.LinAlgError):
        return StepResult(state, False, "nonfinite", 0)
    if not np.all(np.isfinite(y)) or eig <= 0:
        return StepResult(state, False, "convexity", stages, err)
    if E > state.energy + 1e-12:
        return StepResult(state, False, "energy", stages, err)
    if err > 1.0:
        return StepResult(state, False, "error", stages, err)
    new = FlowState(t=state.t + dt, u=ctx.potential(y), abar=state.abar, grid=state.grid,
                    dt=dt, context=ctx, energy=E, rho=rho)
    return StepResult(new, True, "", stages, err)


# -- diagnostics and driver --------------------------------------------------------

@dataclass
class DiagnosticsRecord:
    step: int
    t: float
    calabi_energy: float
    sup_F: float
    sup_A: float
    sup_A_dev: float
    sup_grad_A: float
    M_hat: float | None
    min_hess_eig: float
    dt: float
    accepted: bool
    Ln_F: float
    argmax_F: list[float]
    stages: int = 1

    def to_json(self) -> str:
        return json.dumps(asdict(self), allow_nan=False)


def diagnostics(state: FlowState, step_index: int = 0, stages: int = 1,
                m_hat: float | None = None) -> DiagnosticsRecord:
    ctx = state.context
    A, H, _W, fn = ctx.quad_fields(state.values)
    w = ctx.egrid.weights
    n = state.u.dimension
    k = int(np.argmax(fn))  # first index wins ties
    grad = a_gradient(ctx.node_a(state.values), state.grid)
    return DiagnosticsRecord(
        step=step_index, t=float(state.t),
        calabi_energy=float(w @ (A - state.abar) ** 2),
        sup_F=float(fn[k]), sup_A=float(np.abs(A).max()),
        sup_A_dev=float(np.abs(A - state.abar).max()),
        sup_grad_A=float(np.nanmax(np.linalg.norm(grad, axis=1))),
        M_hat=m_hat, min_hess_eig=float(np.linalg.eigvalsh(H)[:, 0].min()), dt=float(state.dt),
        accepted=True, Ln_F=float((w @ fn ** n) ** (1.0 / n)),
        argmax_F=[float(v) for v in ctx.egrid.points[k]], stages=stages)


@dataclass
class RunResult:
    reason: str  # "converged" | "time reached" | "singularity" | "max steps"
    state: FlowState
    initial: DiagnosticsRecord
    records: list[DiagnosticsRecord]
    detail: str = ""
    checkpoints: list[str] = field(default_factory=list)
    rejected: int = 0

    @property
    def final(self) -> DiagnosticsRecord:
        return self.records[-1] if self.records else self.initial


def _m_hat(state: FlowState, seed: int) -> float:
    return estimate_M(state.u, levels=1, n_random=2, n_offsets=5, seed=seed).M_hat


def _controller(err: float) -> float:
    return 0.8 * max(err, 1e-10) ** (-1.0 / 3.0)


def run(state: FlowState, config: FlowConfig, out_dir=None, jsonl=None,
        callback=None) -> RunResult:
    """Step until ``t_end``, convergence, a curvature threshold or ``dt`` underflow.

    One diagnostics record per accepted step, written to ``jsonl`` (an open
    text stream) if given.  Checkpoints of ``f`` go to ``out_dir``;
    ``callback(state)`` sees every accepted state.
    """
    ctx = state.context
    use_m = config.mhat_every > 0
    m_hat = _m_hat(state, config.seed) if use_m else None
    init = diagnostics(state, 0, 0, m_hat)
    records: list[DiagnosticsRecord] = []
    ckpts: list[str] = []

    def finish(reason, detail=""):
        if out_dir is not None:
            path = Path(out_dir) / "final.ckpt"
            save_checkpoint(state.u.smooth, path)
            ckpts.append(str(path))
        return RunResult(reason, state, init, records, detail, ckpts, rejected)

    rejected = 0
    if init.sup_F > config.sup_F_threshold:
        return finish("singularity", f"sup|F| = {init.sup_F:.6g} exceeds threshold")
    if init.sup_A_dev < config.convergence_tol:
        return finish("converged")
    if config.t_end <= 0:
        return finish("time reached")
    dt = config.dt_init
    state.rho = ctx.spectral_radius(state.values, seed=config.seed)
    n_acc = 0
    while True:
        if state.t >= config.t_end * (1 - 1e-12):
            return finish("time reached")
        if n_acc >= config.max_steps:
            return finish("max steps")
        dt = min(dt, config.dt_max, config.t_end - state.t)
        if config.scheme == "euler":
            dt = min(dt, 1.9 / state.rho)
        res = step(state, dt, config.scheme, config.step_tol)
        if not res.accepted:
            rejected += 1
            dt *= min(0.5, _controller(res.error))
            if dt < config.dt_min:
                return finish("singularity", f"dt underflow after {res.reason} rejection")
            continue
        state = res.state
        n_acc += 1
        if config.rho_every and n_acc % config.rho_every == 0:
            state.rho = ctx.spectral_radius(state.values, seed=config.seed)
        if use_m and n_acc % config.mhat_every == 0:
            m_hat = _m_hat(state, config.seed)
        rec = diagnostics(state, n_acc, res.stages, m_hat)
        records.append(rec)
        if callback is not None:
            callback(state)
        if jsonl is not None:
            jsonl.write(rec.to_json() + "\n")
        if out_dir is not None and config.checkpoint_every and n_acc % config.checkpoint_every == 0:
            path = Path(out_dir) / f"step_{n_acc:06d}.ckpt"
            save_checkpoint(state.u.smooth, path)
            ckpts.append(str(path))
        if rec.sup_F > config.sup_F_threshold:
            return finish("singularity", f"sup|F| = {rec.sup_F:.6g} exceeds threshold")
        if rec.sup_A_dev < config.convergence_tol:
            return finish("converged")
        dt = dt * min(config.growth, _controller(res.error)) if res.error > 0 else dt * config.growth


@dataclass
class ProbeResult:
    t: float
    dt: float
    fd_rate: float
    midpoint_rate: float

    @property
    def rel_error(self) -> float:
        return abs(self.fd_rate - self.midpoint_rate) / max(abs(self.midpoint_rate), 1e-300)


def probe_decay(state: FlowState, dt: float, scheme: str = "rkc") -> ProbeResult:
    """Compare ``(E(t+dt) - E(t))/dt`` with the decay rate at ``t + dt/2``."""
    full = step(state, dt, scheme)
    half = step(state, 0.5 * dt, scheme)
    if not (full.accepted and half.accepted):
        raise RuntimeError("probe step rejected; use a smaller dt")
    fd = (full.state.energy - state.energy) / dt
    mid = energy_decay_rate(half.state.u, state.grid)
    return ProbeResult(state.t, dt, fd, mid)
