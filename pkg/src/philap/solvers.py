"""Discrete minimizers of ``int phi(|grad u|)`` and implicit Euler steps.

Discretization: continuous piecewise-linear elements on the Kuhn
triangulation of the node grid (every grid cell split into ``n!`` simplices
along coordinate paths), so the gradient on a simplex is a vector of forward
differences and ``u -> grad u`` is a sparse matrix ``D``.  The discrete energy
is ``E(u) = sum_S |S| phi(|D u|_S)``; its partial derivative with respect to
an interior nodal value is exactly the weak form tested against that node's
hat function.  For ``phi(t) = t^2`` in two dimensions ``D^T D`` is the
five-point Laplacian.

Minimization is nonlinear conjugate gradients (Polak-Ribiere+, diagonal
preconditioning) with an Armijo backtracking search started from the
one-dimensional Newton step.  Singular N-functions are first regularized as
``phi(sqrt(t^2 + eps^2)) - phi(eps)`` and ``eps`` is driven to zero.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .errors import ConfigError, NonConvergence, NumericalBreakdown
from .fields import SpaceTimeField, UniformGrid, VectorField
from .nfunction import NFunction

__all__ = [
    "SolveConfig", "SolveReport", "P1Operator", "energy", "weak_residual",
    "solve_elliptic", "solve_parabolic", "preset", "PRESETS",
    "frozen_coefficient_solve", "linear_solve", "dissipation_gaps",
]

_GL3_X, _GL3_W = np.polynomial.legendre.leggauss(4)


@dataclass(frozen=True)
class SolveConfig:
    tol_residual: float = 1e-10
    max_iters: int = 20000
    eps0: float | None = None           # None: 1e-2 times the data gradient scale
    continuation_factor: float = 0.25
    continuation: str = "auto"          # "auto" (singular phi only), "on", "off"
    c1: float = 1e-4
    backtrack: float = 0.5
    restart: int = 200
    initial: str = "harmonic"           # "harmonic" or "zero" interior start
    record_history: bool = False

    def __post_init__(self):
        if not self.tol_residual > 0:
            raise ConfigError("tol_residual must be positive")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be positive")
        if not 0 < self.continuation_factor < 1:
            raise ConfigError("continuation_factor must lie in (0, 1)")
        if not 0 < self.c1 < 1 or not 0 < self.backtrack < 1:
            raise ConfigError("Armijo parameters must lie in (0, 1)")
        if self.continuation not in ("auto", "on", "off"):
            raise ConfigError("continuation is auto, on or off")
        if self.initial not in ("harmonic", "zero"):
            raise ConfigError("initial is harmonic or zero")


@dataclass
class SolveReport:
    iterations: int = 0
    energy: float = math.nan
    residual: float = math.nan
    eps_schedule: list = field(default_factory=list)
    wall_time: float = 0.0
    converged: bool = False
    energy_history: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)
    steps: list = field(default_factory=list)   # per time step (parabolic)

    def as_dict(self):
        d = {k: v for k, v in self.__dict__.items() if k != "steps"}
        if self.steps:
            d["steps"] = [s.as_dict() for s in self.steps]
        return d


class P1Operator:
    """Sparse simplex gradient ``D`` for a grid, with bookkeeping."""

    def __init__(self, grid: UniformGrid):
        self.grid = grid
        n, h = grid.n, grid.h
        shape = np.array(grid.shape)
        strides = np.array([int(np.prod(shape[i + 1:])) for i in range(n)])
        cells = np.stack(np.meshgrid(*[np.arange(s - 1) for s in shape], indexing="ij"),
                         axis=-1).reshape(-1, n)
        base = cells @ strides
        perms = list(itertools.permutations(range(n)))
        C = len(base)
        rows, cols, vals = [], [], []
        for pi, perm in enumerate(perms):
            prev = base.copy()
            for ax in perm:
                nxt = prev + strides[ax]
                r = (pi * C + np.arange(C)) * n + ax
                rows += [r, r]
                cols += [nxt, prev]
                vals += [np.full(C, 1.0 / h), np.full(C, -1.0 / h)]
                prev = nxt
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        self.simplices = C * len(perms)
        self.D = sparse.csr_matrix((vals, (rows, cols)), shape=(self.simplices * n, grid.size))
        self.DT = self.D.T.tocsr()
        self.D2T = self.D.multiply(self.D).T.tocsr()
        self.vol = h ** n / math.factorial(n)
        self.boundary = grid.boundary_mask().ravel()
        self.interior = np.flatnonzero(~self.boundary)

    def grad(self, u):
        """Simplex gradients, shape ``(S, n, m)`` for nodal values ``(N, m)``."""
        return (self.D @ u).reshape(self.simplices, self.grid.n, -1)

    def div(self, A):
        """``D^T`` applied to simplex fluxes ``(S, n, m)``."""
        return self.DT @ A.reshape(self.simplices * self.grid.n, -1)


_OPS = {}


def _operator(grid):
    op = _OPS.get(grid)
    if op is None:
        if len(_OPS) > 16:
            _OPS.clear()
        op = _OPS[grid] = P1Operator(grid)
    return op


def _is_singular(nf: NFunction):
    with np.errstate(all="ignore"):
        lo, mid = nf.d2(np.array([1e-12, 1e-6]))
    return not np.isfinite(lo) or lo > 10 * mid


class _Integrand:
    """``phi(s) - phi(eps)`` with ``s = sqrt(t^2 + eps^2)`` and its derivatives."""

    def __init__(self, nf: NFunction, eps: float, s_floor: float):
        self.nf = nf
        self.eps = float(eps)
        self.floor = s_floor
        self.offset = float(nf(eps)) if eps > 0 else 0.0

    def s(self, G):
        t2 = np.einsum("sij,sij->s", G, G)
        return np.sqrt(t2 + self.eps ** 2)

    def value(self, s):
        return self.nf(s) - self.offset

    def a(self, s):
        # phi'(s)/s, with 0/0 replaced by the floor value
        return self.nf.d1_over_t(np.maximum(s, self.floor))

    def b(self, s):
        return self.nf.d2(np.maximum(s, self.floor))

    def delta(self, s0, s1, ds=None):
        """``phi(s1) - phi(s0)`` without cancellation for nearby arguments.

        ``ds`` is ``s1 - s0`` computed by the caller without rounding loss.
        """
        if ds is None:
            ds = s1 - s0
        near = np.abs(ds) <= 1e-3 * (s0 + s1)
        out = self.nf(s1) - self.nf(s0)
        if np.any(near):
            a, d = s0[near], ds[near]
            mid, half = a + 0.5 * d, 0.5 * d
            nodes = mid[:, None] + half[:, None] * _GL3_X[None, :]
            out[near] = half * np.sum(self.nf.d1(nodes) * _GL3_W, axis=1)
        return out


def _step_s(G, dG, s0, eps):
    """New ``s`` and the increment ``s1 - s0`` after ``G -> G + dG``."""
    ds2 = 2 * np.einsum("sij,sij->s", G, dG) + np.einsum("sij,sij->s", dG, dG)
    s1 = np.sqrt(np.maximum(s0 ** 2 + ds2, eps ** 2))
    tot = s0 + s1
    ds = np.where(tot > 0, ds2 / np.where(tot > 0, tot, 1.0), 0.0)
    return s1, ds


class _Problem:
    """Energy (plus optional mass term) restricted to interior unknowns."""

    def __init__(self, nf, op: P1Operator, u_full, eps, mass=0.0, anchor=None, s_floor=1e-300):
        self.nf, self.op = nf, op
        self.u = u_full.copy()                 # boundary values live here
        self.I = op.interior
        self.mass = mass                       # coefficient c in c |w - anchor|^2
        self.anchor = anchor
        self.f = _Integrand(nf, eps, s_floor)

    def full(self, x):
        u = self.u.copy()
        u[self.I] = x
        return u

    def state(self, x):
        u = self.full(x)
        G = self.op.grad(u)
        return G, self.f.s(G)

    def energy(self, x, state=None):
        G, s = self.state(x) if state is None else state
        E = self.op.vol * float(np.sum(self.f.value(s)))
        if self.mass:
            E += self.mass * float(np.sum((x - self.anchor) ** 2))
        return E

    def gradient(self, x, state=None):
        G, s = self.state(x) if state is None else state
        A = self.f.a(s)[:, None, None] * G
        g = self.op.vol * self.op.div(A)[self.I]
        if self.mass:
            g = g + 2 * self.mass * (x - self.anchor)
        return g

    def curvature(self, state, d):
        """``d . H d`` with the exact Hessian of the integrand."""
        G, s = state
        dd = np.zeros_like(self.u)
        dd[self.I] = d
        Gd = self.op.grad(dd)
        a, b = self.f.a(s), self.f.b(s)
        t2 = np.maximum(s, self.f.floor) ** 2
        proj = np.einsum("sij,sij->s", G, Gd)
        radial = np.divide(proj ** 2, t2, out=np.zeros_like(proj), where=t2 > 0)
        quad = a * np.einsum("sij,sij->s", Gd, Gd) + (b - a) * radial
        k = self.op.vol * float(np.sum(quad))
        if self.mass:
            k += 2 * self.mass * float(np.sum(d * d))
        return k

    def delta(self, x, state, d, alpha):
        """``F(x + alpha d) - F(x)`` evaluated without cancellation."""
        G, s = state
        dd = np.zeros_like(self.u)
        dd[self.I] = alpha * d
        dG = self.op.grad(dd)
        G1 = G + dG
        s1, ds = _step_s(G, dG, s, self.f.eps)
        dE = self.op.vol * float(np.sum(self.f.delta(s, s1, ds)))
        if self.mass:
            r = x - self.anchor
            dE += self.mass * float(np.sum(alpha * d * (2 * r + alpha * d)))
        return dE, (G1, s1)

    def precond(self, state):
        G, s = state
        a = np.repeat(self.f.a(s), self.op.grid.n)
        diag = self.op.vol * (self.op.D2T @ a)[self.I]
        if self.mass:
            diag = diag + 2 * self.mass
        floor = 1e-12 * max(float(diag.max()), 1e-300)
        return np.maximum(diag, floor)


def _ncg(prob: _Problem, x, tol_abs, max_iters, cfg: SolveConfig, report: SolveReport,
         e_scale=None):
    """Preconditioned PR+ nonlinear CG; returns (x, iterations, grad_max, stalled)."""
    state = prob.state(x)
    g = prob.gradient(x, state)
    M = prob.precond(state)
    z = g / M
    d = -z
    gz = float(g @ z)
    F = prob.energy(x, state)
    it = 0
    stalled = False
    while it < max_iters:
        gmax = float(np.max(np.abs(g))) if g.size else 0.0
        if not np.isfinite(gmax) or not np.isfinite(F):
            raise NumericalBreakdown("non-finite energy or gradient")
        if cfg.record_history:
            report.energy_history.append(F)
            report.residual_history.append(gmax / (1.0 + (F if e_scale is None else e_scale(x))))
        if gmax <= tol_abs(F):
            break
        slope = float(g @ d)
        if slope >= 0:
            d = -z
            slope = -gz
        kappa = prob.curvature(state, d)
        alpha = -slope / kappa if kappa > 0 and np.isfinite(kappa) else 1.0 / max(float(np.max(np.abs(d))), 1e-300)
        accepted = False
        for _ in range(80):
            dF, new_state = prob.delta(x, state, d, alpha)
            if not np.isfinite(dF):
                alpha *= cfg.backtrack
                continue
            if dF <= cfg.c1 * alpha * slope and dF < 0:
                accepted = True
                break
            alpha *= cfg.backtrack
        if not accepted:
            if np.array_equal(d, -z):
                stalled = True
                break
            d = -z          # restart from steepest descent
            continue
        x = x + alpha * d
        state = new_state
        F = F + dF
        it += 1
        g_new = prob.gradient(x, state)
        if it % cfg.restart == 0:
            M = prob.precond(state)
        z_new = g_new / M
        gz_new = float(g_new @ z_new)
        beta = max(0.0, (gz_new - float(g_new @ z)) / gz) if gz > 0 else 0.0
        if it % cfg.restart == 0:
            beta = 0.0
        d = -z_new + beta * d
        g, z, gz = g_new, z_new, gz_new
    gmax = float(np.max(np.abs(g))) if g.size else 0.0
    return x, it, gmax, stalled


# -- public API ------------------------------------------------------------------


def _as_nodal(grid: UniformGrid, data, m=None):
    """Nodal array ``(N, m)`` from a field, array or callable of coordinates."""
    if isinstance(data, VectorField):
        vals = data.values
    elif callable(data):
        vals = np.asarray(data(grid.coords()), dtype=float)
    else:
        vals = np.asarray(data, dtype=float)
    if vals.shape == grid.shape:
        vals = vals[..., None]
    if vals.ndim == 2 and vals.shape[0] == grid.size:
        vals = vals.reshape(grid.shape + (-1,))
    if vals.shape[:-1] != grid.shape:
        raise ConfigError("boundary data does not fit the grid")
    if not np.all(np.isfinite(vals)):
        raise ConfigError("boundary data must be finite")
    return vals.reshape(grid.size, -1).astype(float)


def energy(nf: NFunction, u: VectorField) -> float:
    """``sum_S |S| phi(|grad u|_S)`` over the simplices of the grid."""
    op = _operator(u.grid)
    G = op.grad(u.values.reshape(u.grid.size, -1))
    t = np.sqrt(np.einsum("sij,sij->s", G, G))
    return op.vol * float(np.sum(nf(t)))


def nodal_residuals(nf: NFunction, u: VectorField):
    """``dE/du_i`` at every interior node and component (the weak form
    tested against the hat function of node ``i``)."""
    op = _operator(u.grid)
    G = op.grad(u.values.reshape(u.grid.size, -1))
    t = np.sqrt(np.einsum("sij,sij->s", G, G))
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(t > 0, nf.d1_over_t(np.where(t > 0, t, 1.0)), 0.0)
    return op.vol * op.div(a[:, None, None] * G)[op.interior]


def weak_residual(nf: NFunction, u: VectorField) -> float:
    """Largest tested weak residual, normalized by ``1 + energy``."""
    r = nodal_residuals(nf, u)
    if r.size == 0:
        return 0.0
    return float(np.max(np.abs(r))) / (1.0 + energy(nf, u))


def linear_solve(grid: UniformGrid, coeff, boundary, op=None):
    """Solve ``D^T diag(coeff) D u = 0`` in the interior with given boundary values."""
    op = op or _operator(grid)
    b = _as_nodal(grid, boundary)
    w = np.repeat(np.broadcast_to(np.asarray(coeff, dtype=float), (op.simplices,)), grid.n)
    K = (op.DT @ sparse.diags(w) @ op.D).tocsr()
    I, B = op.interior, np.flatnonzero(op.boundary)
    KII = K[I][:, I].tocsc()
    rhs = -(K[I][:, B] @ b[B])
    u = b.copy()
    if len(I):
        lu = splinalg.splu(KII)
        u[I] = lu.solve(rhs) if rhs.ndim == 2 else lu.solve(rhs[:, None])
    return u


def frozen_coefficient_solve(nf: NFunction, u: VectorField) -> VectorField:
    """One re-solve of the system linearized with ``phi'(v)/v`` frozen at ``u``."""
    op = _operator(u.grid)
    G = op.grad(u.values.reshape(u.grid.size, -1))
    t = np.sqrt(np.einsum("sij,sij->s", G, G))
    scale = max(float(t.max()), 1e-300)
    a = nf.d1_over_t(np.maximum(t, 1e-8 * scale))
    out = linear_solve(u.grid, a, u.values, op)
    return VectorField(u.grid, out.reshape(u.values.shape))


def _data_scale(grid, b, op):
    bd = b[op.boundary]
    span = float(np.max(bd) - np.min(bd)) if bd.size else 0.0
    extent = grid.h * (max(grid.shape) - 1)
    return span / extent if extent > 0 else 0.0


def solve_elliptic(nf: NFunction, grid: UniformGrid, dirichlet, cfg: SolveConfig | None = None):
    """Minimize the discrete energy with the boundary values of ``dirichlet``.

    Returns ``(VectorField, SolveReport)``.  Raises ``NonConvergence`` (with
    the best iterate attached) if the weak residual misses the tolerance.
    """
    cfg = cfg or SolveConfig()
    t0 = time.perf_counter()
    op = _operator(grid)
    b = _as_nodal(grid, dirichlet)
    m = b.shape[1]
    u0 = b.copy()
    if cfg.initial == "harmonic":
        u0 = linear_solve(grid, 1.0, b, op)
    else:
        u0[op.interior] = 0.0
    report = SolveReport()
    scale = _data_scale(grid, b, op)
    singular = _is_singular(nf)
    use_cont = cfg.continuation == "on" or (cfg.continuation == "auto" and singular)
    s_floor = 1e-10 * max(scale, 1e-300) if singular else 1e-300
    x = u0[op.interior].ravel()
    total_it = 0

    def run(eps, tol_rel, budget):
        nonlocal x, total_it
        prob = _Problem(nf, op, u0, eps, s_floor=s_floor)
        prob.I = op.interior
        shape = (len(op.interior), m)
        xx, it, gmax, stalled = _ncg(_Flat(prob, shape), x, lambda F: tol_rel * (1.0 + F),
                                     budget, cfg, report)
        x = xx
        total_it += it
        return prob, gmax, stalled

    if use_cont and scale > 0:
        eps = cfg.eps0 if cfg.eps0 is not None else 1e-2 * scale
        while eps > 1e-8 * scale and total_it < cfg.max_iters:
            report.eps_schedule.append(eps)
            run(eps, max(cfg.tol_residual, 1e-7), cfg.max_iters - total_it)
            u = _fill(grid, u0, op, x, m)
            if weak_residual(nf, u) <= cfg.tol_residual:
                break
            eps *= cfg.continuation_factor
    report.eps_schedule.append(0.0)
    _, _, stalled = run(0.0, cfg.tol_residual, max(cfg.max_iters - total_it, 1))
    u = _fill(grid, u0, op, x, m)
    report.iterations = total_it
    report.energy = energy(nf, u)
    report.residual = weak_residual(nf, u)
    report.converged = report.residual <= cfg.tol_residual
    report.wall_time = time.perf_counter() - t0
    if not report.converged:
        raise NonConvergence(
            f"weak residual {report.residual:.3e} above tolerance {cfg.tol_residual:.1e} "
            f"after {total_it} iterations" + (" (line search stalled)" if stalled else ""),
            result=(u, report))
    return u, report


class _Flat:
    """Adapter presenting an ``(I, m)`` problem as a flat vector problem."""

    def __init__(self, prob: _Problem, shape):
        self.p = prob
        self.shape = shape

    def _x(self, x):
        return x.reshape(self.shape)

    def state(self, x):
        return self.p.state(self._x(x))

    def energy(self, x, state=None):
        return self.p.energy(self._x(x), state)

    def gradient(self, x, state=None):
        return self.p.gradient(self._x(x), state).ravel()

    def curvature(self, state, d):
        return self.p.curvature(state, d.reshape(self.shape))

    def delta(self, x, state, d, alpha):
        return self.p.delta(self._x(x), state, d.reshape(self.shape), alpha)

    def precond(self, state):
        # one diagonal entry per node, shared by all components
        return np.repeat(self.p.precond(state), self.shape[1])


def _fill(grid, u0, op, x, m):
    u = u0.copy()
    u[op.interior] = x.reshape(-1, m)
    return VectorField(grid, u.reshape(grid.shape + (m,)))


def solve_parabolic(nf: NFunction, grid: UniformGrid, initial, dirichlet=None, tau=1e-3,
                    steps=10, cfg: SolveConfig | None = None):
    """Implicit Euler: frame ``k+1`` minimizes
    ``E(w) + sum_i h^n |w_i - u_k,i|^2 / (2 tau)`` started from ``u_k``.

    Boundary values are those of ``dirichlet`` (default: of ``initial``),
    held fixed in time.  Every accepted line-search step lowers the step
    objective, so the dissipation inequality holds by construction.
    """
    cfg = cfg or SolveConfig()
    if not tau > 0:
        raise ConfigError("tau must be positive")
    t0 = time.perf_counter()
    op = _operator(grid)
    u = _as_nodal(grid, initial)
    m = u.shape[1]
    if dirichlet is not None:
        b = _as_nodal(grid, dirichlet)
        if not np.allclose(u[op.boundary], b[op.boundary], rtol=0, atol=1e-12):
            raise ConfigError("initial data must match the boundary values")
    c = grid.cell_volume / (2 * tau)
    scale = _data_scale(grid, u, op)
    s_floor = 1e-10 * max(scale, 1e-300) if _is_singular(nf) else 1e-300
    frames = [u.copy()]
    report = SolveReport(eps_schedule=[0.0])
    for k in range(steps):
        anchor = u[op.interior].copy()
        prob = _Problem(nf, op, u, 0.0, mass=c, anchor=anchor, s_floor=s_floor)
        sub = SolveReport()
        st = time.perf_counter()
        x, it, gmax, stalled = _ncg(_Flat(prob, anchor.shape), anchor.ravel(),
                                    lambda F: cfg.tol_residual * (1.0 + F), cfg.max_iters, cfg, sub)
        u = u.copy()
        u[op.interior] = x.reshape(-1, m)
        F = prob.energy(x.reshape(-1, m))
        sub.iterations = it
        sub.energy = F
        sub.residual = gmax / (1.0 + F)
        sub.converged = sub.residual <= cfg.tol_residual
        sub.wall_time = time.perf_counter() - st
        report.steps.append(sub)
        report.iterations += it
        frames.append(u.copy())
        if not sub.converged:
            report.wall_time = time.perf_counter() - t0
            partial = SpaceTimeField(grid, tau, np.stack(frames).reshape((-1,) + grid.shape + (m,)))
            raise NonConvergence(f"time step {k + 1}: residual {sub.residual:.3e} above tolerance",
                                 result=(partial, report))
    st = SpaceTimeField(grid, tau, np.stack(frames).reshape((-1,) + grid.shape + (m,)))
    report.energy = energy(nf, st.frame(st.frames - 1))
    report.residual = max(s.residual for s in report.steps) if report.steps else 0.0
    report.converged = True
    report.wall_time = time.perf_counter() - t0
    return st, report


def dissipation_gaps(nf: NFunction, st: SpaceTimeField):
    """Per step ``E(u_k) - E(u_k+1) - sum h^n |u_k+1 - u_k|^2/(2 tau)`` (should be >= 0).

    Energy differences are taken simplex by simplex without cancellation.
    """
    op = _operator(st.grid)
    f = _Integrand(nf, 0.0, 1e-300)
    c = st.grid.cell_volume / (2 * st.tau)
    out = []
    for k in range(st.frames - 1):
        a = st.values[k].reshape(st.grid.size, -1)
        b = st.values[k + 1].reshape(st.grid.size, -1)
        G0 = op.grad(a)
        s0 = f.s(G0)
        s1, ds = _step_s(G0, op.grad(b) - G0, s0, 0.0)
        dE = op.vol * float(np.sum(f.delta(s0, s1, ds)))
        mass = c * float(np.sum((b - a)[op.interior] ** 2))
        out.append(-dE - mass)
    return np.array(out)


# -- boundary presets --------------------------------------------------------------


def _affine(x):
    return 0.3 * x[..., 0] - 0.7 * x[..., -1] + 0.1


def _quadratic(x):
    return x[..., 0] ** 2 - x[..., -1] ** 2


def _exp(x):
    return np.exp(x[..., 0]) * np.cos(x[..., -1])


PRESETS = {
    "affine": _affine,          # solves every phi-Laplace system
    "quadratic": _quadratic,    # harmonic
    "exp": _exp,                # harmonic, not a polynomial
}


def preset(name, m=1):
    """Boundary-data callable; ``m > 1`` stacks scaled copies as components."""
    try:
        f = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown boundary preset {name!r}; choose from {sorted(PRESETS)}") from None
    if m == 1:
        return f
    return lambda x: np.stack([(1.0 + 0.5 * j) * f(x) for j in range(m)], axis=-1)
