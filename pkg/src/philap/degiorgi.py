"""De Giorgi truncation machinery and the gradient-bound certificates.

Elliptic side: level sets ``{v > gamma_k}`` with ``gamma_k = gamma_inf (1 - 2^-k)``
and cutoffs on the balls ``(1 + 2^-k) B``; the sequence
``W_k = avg_{2B} phi(v) chi_{v > gamma_k} zeta_k^q`` should obey
``W_{k+1} <~ 2^{4k} W_k (W_k / phi(gamma_inf))^{2/n}``.  The implicit constant
is fitted per ``k`` and checked for blow-up.

Parabolic side: the same with cylinders ``2(1 + 2^-k) Q`` and the mixed norms
of :mod:`philap.bochner`.

Ratios 0/0 are reported as 1 throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import mpmath
import numpy as np
from scipy import optimize

from . import bochner
from .errors import (AssumptionError, ConfigError, PreconditionError, ResolutionError,
                     VerificationError)
from .fields import (Ball, Cube, Cutoff, Cylinder, SpaceTimeField, UniformGrid, VectorField,
                     avg_integral, gradient, make_cutoff_sequence, make_cylinder_cutoffs)
from .nfunction import NFunction, cutoff_exponent, shifted_props
from .tensor_maps import V_map

__all__ = [
    "IterationConfig", "DeGiorgiReport", "geometric_threshold", "geometric_recursion",
    "fast_geometric_bound", "tune_gamma", "level_lemma_check", "elliptic_energy_check",
    "energy_sweep", "elliptic_wk", "verify_elliptic_bound", "parabolic_cylinder",
    "parabolic_sequences", "verify_parabolic_bound", "difference_quotient_check",
    "rho", "rho_is_increasing", "default_q", "DQBand", "no_blowup",
]

_SNAP = 1e-12          # relative distance within which a0 is snapped to the threshold
_BLOWUP = 1e3


# -- convergence lemmas ------------------------------------------------------------


def _dps(alpha, k_max):
    return int(40 + k_max * math.log10(1 + float(alpha))) + 5


def geometric_threshold(C, b, alpha):
    """``C^(-1/alpha) b^(-1/alpha^2)`` (as an mpmath number)."""
    C, b, alpha = mpmath.mpf(C), mpmath.mpf(b), mpmath.mpf(alpha)
    return C ** (-1 / alpha) * b ** (-1 / alpha ** 2)


def geometric_recursion(C, b, alpha, a0, k_max):
    """Iterates of ``a_{k+1} = C b^k a_k^(1+alpha)`` and the closed-form
    bounds ``C^(-1/alpha) b^(-(1+k alpha)/alpha^2)``, both as mpmath lists.

    ``a0=None`` starts exactly at the threshold.  Working precision grows
    with ``k_max`` because the recursion amplifies relative rounding by
    ``(1 + alpha)`` per step.
    """
    if not (C > 0 and b > 1 and alpha > 0):
        raise PreconditionError("need C > 0, b > 1, alpha > 0")
    with mpmath.workdps(_dps(alpha, k_max)):
        C_, b_, al = mpmath.mpf(C), mpmath.mpf(b), mpmath.mpf(alpha)
        thr = geometric_threshold(C_, b_, al)
        a = thr if a0 is None else mpmath.mpf(a0)
        if a < 0:
            raise PreconditionError("a0 must be non-negative")
        if a > thr:
            if a <= thr * (1 + _SNAP):
                a = thr
            else:
                raise PreconditionError(
                    f"a0 = {mpmath.nstr(a, 8)} exceeds the threshold {mpmath.nstr(thr, 8)}")
        bounds = [thr * b_ ** (-(k * al) / al ** 2) for k in range(k_max + 1)]
        vals = [a]
        for k in range(k_max):
            vals.append(C_ * b_ ** k * vals[-1] ** (1 + al))
        return vals, bounds


def fast_geometric_bound(C, b, alpha, a0=None, k_max=50):
    """Closed-form bounds ``C^(-1/alpha) b^(-(1+k alpha)/alpha^2)``, k = 0..k_max.

    Also runs the recursion from ``a0`` and raises ``VerificationError`` if
    an iterate exceeds its bound (relative slack ``1e-20`` for rounding).
    """
    with mpmath.workdps(_dps(alpha, k_max)):
        vals, bounds = geometric_recursion(C, b, alpha, a0, k_max)
        for k, (a, bd) in enumerate(zip(vals, bounds)):
            if a > bd * (1 + mpmath.mpf("1e-20")):
                raise VerificationError(f"a_{k} = {mpmath.nstr(a, 12)} exceeds bound {mpmath.nstr(bd, 12)}")
        return [float(bd) for bd in bounds]


def tune_gamma(C, b, alpha, a0):
    """``gamma = a0 C^(1/alpha) b^(1/alpha^2)``, so ``a0/gamma`` sits exactly at the threshold."""
    if not (C > 0 and b > 1 and alpha > 0 and a0 >= 0):
        raise PreconditionError("need C > 0, b > 1, alpha > 0, a0 >= 0")
    return a0 * C ** (1 / alpha) * b ** (1 / alpha ** 2)


def level_lemma_check(h, c, k, v_samples, d=None):
    """Worst ``h(v) / (2^{k+1} (h(v) - h(c_k))_+)`` over samples, ``c_k = c(1 - 2^-k)``.

    Samples must exceed ``c_{k+1}``.  With ``d`` given (the doubling
    constant of ``h``) a ratio above ``d`` raises ``VerificationError``.
    """
    v = np.asarray(v_samples, dtype=float)
    ck = c * (1 - 2.0 ** (-k))
    ck1 = c * (1 - 2.0 ** (-k - 1))
    if np.any(v <= ck1):
        raise PreconditionError("samples must exceed c_{k+1}")
    hv = np.asarray(h(v), dtype=float)
    worst = float(np.max(hv / (2.0 ** (k + 1) * np.maximum(hv - float(h(np.float64(ck))), 0.0))))
    if d is not None and not worst <= d * (1 + 1e-12):
        raise VerificationError(f"level ratio {worst} exceeds doubling constant {d}")
    return worst


# -- configuration and reports ----------------------------------------------------------


@dataclass(frozen=True)
class IterationConfig:
    gamma_inf: float | None = None      # None: sup of v over the base region
    k_max: int = 6
    q: float | None = None              # None: from the shifted-function exponent
    alpha: float = 1.0
    exponent_e: float | None = None     # None: (2 - n)/2

    def __post_init__(self):
        if self.gamma_inf is not None and not self.gamma_inf > 0:
            raise ConfigError("gamma_inf must be positive")
        if self.k_max < 3:
            raise ConfigError("k_max must be at least 3")
        if self.q is not None and not self.q > 2:
            raise ConfigError("q must exceed 2")
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive")


@dataclass
class DeGiorgiReport:
    W: list
    recursion_constants: list
    bound_ratio: float
    passed: bool
    gamma_inf: float
    q: float
    Y: list = field(default_factory=list)
    Z: list = field(default_factory=list)
    lemma_constants: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def as_dict(self):
        return dict(self.__dict__)


def default_q(nf: NFunction):
    return cutoff_exponent(shifted_props(nf).eps)


def no_blowup(constants, factor=_BLOWUP):
    c = np.asarray([x for x in constants if np.isfinite(x) and x > 0])
    if c.size == 0:
        return True
    return bool(c.max() <= factor * np.median(c))


def _ratio(num, den):
    if den == 0:
        return 1.0 if num == 0 else math.inf
    return num / den


def _v(u):
    return gradient(u).norm() if isinstance(u, VectorField) else np.asarray(u, dtype=float)


def _phi_inverse(nf, y):
    if y <= 0:
        return 0.0
    f = lambda x: float(nf(math.exp(x))) - y
    lo, hi = -1.0, 1.0
    while f(lo) > 0:
        lo *= 2
    while f(hi) < 0:
        hi *= 2
    return math.exp(optimize.brentq(f, lo, hi, xtol=1e-14))


# -- elliptic ----------------------------------------------------------------------------


def _check_ball(ball: Ball, grid: UniformGrid):
    if not ball.scaled(2.0).inside(grid):
        raise ResolutionError("2B is not inside the grid")
    if 2 * ball.radius < 8 * grid.h:
        raise ResolutionError("ball is less than 8 cells across")


def elliptic_energy_check(nf: NFunction, u: VectorField, ball: Ball, gamma, q=3.0):
    """``(avg_B |grad(G(v) eta^(q/2))|^2, avg_B phi(v) chi_{v>gamma} |grad eta|^2)``.

    ``G(t) = (psi'(t) - psi'(gamma))_+`` and ``eta`` is the quintic cutoff
    equal to 1 on ``B/2`` and vanishing outside ``B``.
    """
    g = u.grid
    _check_ball(ball, g)
    v = _v(u)
    x = g.coords()
    eta = Cutoff(ball.center, 0.5 * ball.radius, ball.radius, q)
    ev = eta.space(x)
    psi = lambda t: np.sqrt(t * nf.d1(t))
    Gv = np.maximum(psi(v) - float(psi(np.float64(gamma))), 0.0)
    F = Gv * ev ** (q / 2)
    dF = np.stack(np.gradient(F, g.h, edge_order=2), axis=-1) if g.n > 1 else np.gradient(F, g.h, edge_order=2)[..., None]
    lhs = avg_integral(np.sum(dF ** 2, axis=-1), ball, g)
    grad_eta2 = np.sum(eta.space_grad(x) ** 2, axis=-1)
    rhs = avg_integral(nf(v) * (v > gamma) * grad_eta2, ball, g)
    return float(lhs), float(rhs)


def energy_sweep(nf: NFunction, u: VectorField, ball: Ball, gammas, q=3.0):
    """Energy pairs over a sweep of levels and the fitted constant ``max lhs/rhs``."""
    pairs = [elliptic_energy_check(nf, u, ball, gm, q) for gm in gammas]
    fits = [l / r for l, r in pairs if r > 0]
    return pairs, (max(fits) if fits else 0.0)


def elliptic_wk(nf: NFunction, v, ball: Ball, cfg: IterationConfig = IterationConfig(),
                grid: UniformGrid | None = None) -> DeGiorgiReport:
    """``W_k`` for ``k <= k_max`` and the fitted recursion constants.

    ``v`` is a solved ``VectorField`` (its gradient norm is taken) or a
    nodal array of ``|grad u|`` together with ``grid``.
    """
    if isinstance(v, VectorField):
        grid = v.grid
    if grid is None:
        raise ConfigError("a nodal array needs its grid")
    v = _v(v)
    n = grid.n
    q = cfg.q if cfg.q is not None else default_q(nf)
    cut = make_cutoff_sequence(ball, cfg.k_max + 1, q, grid)
    x = grid.coords()
    big = ball.scaled(2.0)
    notes = []
    gi = cfg.gamma_inf
    if gi is None:
        gi = float(np.max(np.where(ball.contains(x), v, 0.0)))
        notes.append("gamma_inf = sup_B v")
    phi_v = nf(v)
    zetas = [c.space(x) ** q for c in cut]

    def sequence(gamma_inf):
        W = []
        for k in range(cfg.k_max + 1):
            gk = gamma_inf * (1 - 2.0 ** (-k))
            W.append(avg_integral(phi_v * (v > gk) * zetas[k], big, grid))
        return W

    if gi <= 0:
        W = sequence(1.0)
        return DeGiorgiReport(W, [], 1.0, True, 0.0, q, notes=notes + ["v vanishes on B"])
    W = sequence(gi)
    consts = _fit_elliptic(W, float(nf(gi)), n)
    passed = no_blowup(consts) and W[-1] <= W[0] and all(
        W[k + 1] <= W[k] * (1 + 1e-12) for k in range(len(W) - 1))
    return DeGiorgiReport(W, consts, math.nan, passed, gi, q, notes=notes)


def _fit_elliptic(W, phig, n):
    out = []
    for k in range(len(W) - 1):
        if W[k] > 0 and W[k + 1] > 0:
            out.append(W[k + 1] * phig ** (2 / n) / (2.0 ** (4 * k) * W[k] ** (1 + 2 / n)))
        else:
            out.append(math.nan)
    return out


def auto_gamma(nf: NFunction, u, ball: Ball, cfg: IterationConfig = IterationConfig(),
               grid=None, b=16.0, rounds=8):
    """Choose ``gamma_inf`` by the tuning rule ``phi(gamma_inf) = W_0 C^(n/2) b^(n^2/4)``.

    ``C`` is the largest fitted recursion constant at the current level;
    the rule is iterated to a fixed point (or ``rounds`` times).
    """
    if isinstance(u, VectorField):
        grid = u.grid
    n = grid.n
    rep = elliptic_wk(nf, u, ball, cfg, grid)
    gi = rep.gamma_inf if rep.gamma_inf > 0 else 1.0
    for _ in range(rounds):
        rep = elliptic_wk(nf, u, ball, replace(cfg, gamma_inf=gi), grid)
        c = [x for x in rep.recursion_constants if np.isfinite(x)]
        C = max(c) if c else 1.0
        target = tune_gamma(C, b, 2.0 / n, rep.W[0])
        new = _phi_inverse(nf, target)
        if new <= 0 or abs(new - gi) <= 1e-10 * gi:
            break
        gi = new
    return gi


def verify_elliptic_bound(nf: NFunction, u, ball: Ball, grid: UniformGrid | None = None) -> float:
    """``sup_B phi(v) / avg_{2B} phi(v)`` (1 for ``v = 0``)."""
    if isinstance(u, VectorField):
        grid = u.grid
    if not ball.scaled(2.0).inside(grid):
        raise ResolutionError("2B is not inside the grid")
    v = _v(u)
    x = grid.coords()
    pv = nf(v)
    inside = ball.contains(x)
    if not np.any(inside):
        raise ResolutionError("no grid cell lies in B")
    sup = float(pv[inside].max())
    avg = avg_integral(pv, ball.scaled(2.0), grid)
    if sup == 0 and avg == 0:
        return 1.0
    return _ratio(sup, avg)


# -- parabolic ---------------------------------------------------------------------------


def parabolic_cylinder(center, R_x, t_center, alpha):
    """``I x B`` with ``|I| = R_t = alpha R_x^2``, centered at ``t_center``."""
    return Cylinder(tuple(center), R_x, t_center, 0.5 * alpha * R_x ** 2)


def rho(nf: NFunction, t, n):
    """``rho(t) = (phi(t) t^(4/n - 2))^(n/2)``."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return (nf(t) * t ** (4.0 / n - 2)) ** (n / 2.0)


def rho_is_increasing(nf: NFunction, n, grid=None):
    t = np.geomspace(1e-6, 1e6, 1025) if grid is None else np.asarray(grid, dtype=float)
    t = t[t > 0]
    r = np.asarray(nf(t) * t ** (4.0 / n - 2))
    return bool(np.all(np.diff(r) >= -1e-12 * np.abs(r[:-1])))


def _st_v(st: SpaceTimeField):
    return np.stack([gradient(st.frame(k)).norm() for k in range(st.frames)])


def _check_alpha(cyl: Cylinder, alpha):
    Rt = 2 * cyl.t_half
    if abs(Rt - alpha * cyl.radius ** 2) > 1e-9 * max(Rt, 1e-300):
        raise PreconditionError(
            f"cylinder height {Rt:g} does not match alpha R_x^2 = {alpha * cyl.radius ** 2:g}")


def parabolic_sequences(nf: NFunction, st: SpaceTimeField, cyl: Cylinder,
                        cfg: IterationConfig = IterationConfig()) -> DeGiorgiReport:
    """``Y_k, Z_k, W_k = Y_k + Z_k/alpha`` and the two lemma ratios.

    Averages run over ``4Q`` (the support of the first cutoff).  The lemma
    constants are
    ``||v^2 chi||_{L^inf(L^1)(k+1)} / (2^{3k} alpha W_k)`` and
    ``||phi(v) chi||_{L^1(L^{n/(n-2)})(k+1)} / (2^{3k} W_k)``
    with ``chi = chi_{v > gamma_{k+1}}``; for ``n = 2`` the inner exponent is
    taken as infinity.
    """
    g = st.grid
    n = g.n
    if n < 2:
        raise ConfigError("the parabolic pipeline needs n >= 2")
    alpha = cfg.alpha
    _check_alpha(cyl, alpha)
    outer = cyl.scaled(4.0)
    if not outer.inside(st):
        raise ResolutionError("4Q (support of the first cutoff) is not inside the space-time grid")
    q = cfg.q if cfg.q is not None else default_q(nf)
    cut = make_cylinder_cutoffs(cyl, cfg.k_max + 1, q)
    times = st.times
    x = g.coords()
    mask = outer.time_mask(times).reshape((-1,) + (1,) * n) & outer.ball.contains(x)[None]
    v = _st_v(st)
    notes = []
    inner_exp = math.inf if n == 2 else n / (n - 2)
    if n == 2:
        notes.append("n = 2: inner exponent n/(n-2) taken as infinity")
    gi = cfg.gamma_inf
    if gi is None:
        base = cyl.time_mask(times).reshape((-1,) + (1,) * n) & cyl.ball.contains(x)[None]
        gi = float(np.max(np.where(base, v, 0.0)))
        notes.append("gamma_inf = sup_Q v")
    phi_v = nf(v)
    v2 = v ** 2
    weights = [c.values(g, times) ** q for c in cut]
    one = bochner.MixedNormSpec(1, 1)
    Y, Z, W = [], [], []
    lem1, lem2 = [], []
    level = gi if gi > 0 else 1.0
    for k in range(cfg.k_max + 1):
        chi = v > level * (1 - 2.0 ** (-k))
        Y.append(bochner.mixed_norm(phi_v * chi, one, weights[k], mask))
        Z.append(bochner.mixed_norm(v2 * chi, one, weights[k], mask))
        W.append(Y[-1] + Z[-1] / alpha)
    for k in range(cfg.k_max):
        chi = v > level * (1 - 2.0 ** (-k - 1))
        a = bochner.mixed_norm(v2 * chi, bochner.MixedNormSpec(math.inf, 1), weights[k + 1], mask)
        b = bochner.mixed_norm(phi_v * chi, bochner.MixedNormSpec(1, inner_exp), weights[k + 1], mask)
        lem1.append(_ratio(a, 2.0 ** (3 * k) * alpha * W[k]) if W[k] > 0 or a > 0 else math.nan)
        lem2.append(_ratio(b, 2.0 ** (3 * k) * W[k]) if W[k] > 0 or b > 0 else math.nan)
    e = cfg.exponent_e if cfg.exponent_e is not None else (2 - n) / 2
    Mg = min(float(rho(nf, level, n)) / alpha ** e, level ** 2 / alpha)
    consts = []
    for k in range(cfg.k_max):
        if W[k] > 0 and W[k + 1] > 0:
            consts.append(W[k + 1] / (2.0 ** (3 * k * (1 + 2 / n)) * W[k] * (W[k] / Mg) ** (2 / n)))
        else:
            consts.append(math.nan)
    passed = (gi == 0 or (no_blowup(consts) and no_blowup(lem1) and no_blowup(lem2))) and all(
        W[k + 1] <= W[k] * (1 + 1e-12) for k in range(len(W) - 1))
    return DeGiorgiReport(W, consts, math.nan, passed, gi, q, Y=Y, Z=Z,
                          lemma_constants={"linf_l1": lem1, "l1_lninner": lem2}, notes=notes)


def verify_parabolic_bound(nf: NFunction, st: SpaceTimeField, cyl: Cylinder,
                           cfg: IterationConfig = IterationConfig()) -> float:
    """``sup_Q min{rho(v)/alpha^e, v^2/alpha} / avg_{2Q}(v^2/alpha + phi(v))``."""
    g = st.grid
    n = g.n
    alpha = cfg.alpha
    _check_alpha(cyl, alpha)
    if not cyl.scaled(2.0).inside(st):
        raise ResolutionError("2Q is not inside the space-time grid")
    v = _st_v(st)
    vmax = float(v.max())
    if vmax > 0:
        probe = np.geomspace(max(vmax * 1e-6, 1e-300), vmax, 257)
        if not rho_is_increasing(nf, n, probe):
            raise AssumptionError("t -> phi(t) t^(4/n - 2) is not increasing on the range of v")
    e = cfg.exponent_e if cfg.exponent_e is not None else (2 - n) / 2
    times = st.times
    x = g.coords()
    base = cyl.time_mask(times).reshape((-1,) + (1,) * n) & cyl.ball.contains(x)[None]
    if not np.any(base):
        raise ResolutionError("no space-time cell lies in Q")
    num = np.minimum(rho(nf, v, n) / alpha ** e, v ** 2 / alpha)
    sup = float(np.max(num[base]))
    den = avg_integral(v ** 2 / alpha + nf(v), cyl.scaled(2.0), g, times)
    if sup == 0 and den == 0:
        return 1.0
    return _ratio(sup, den)


# -- difference quotients ------------------------------------------------------------------


@dataclass(frozen=True)
class DQBand:
    steps: tuple
    ratios: tuple
    slope: float
    lo: float
    hi: float
    passed: bool


def difference_quotient_check(nf: NFunction, u: VectorField, cube: Cube, h_steps=(1, 2, 4, 8)):
    """Ratios ``avg_Q |tau_h V(grad u)|^2 / ((h/R)^2 avg_{5Q} |V(grad u)|^2)``.

    ``R`` is the side of ``Q`` and the translation runs along every axis
    (the largest axis value is used).  Passes when all ratios are finite and
    the log-log slope against ``h`` lies in ``[-0.5, 0.5]``; identically
    vanishing differences give ratio 0 and slope 0.
    """
    g = u.grid
    if not cube.scaled(5.0).inside(g):
        raise ResolutionError("5Q is not inside the grid")
    V = V_map(nf, gradient(u).values)
    V2 = np.einsum("...ij,...ij->...", V, V)
    x = g.coords()
    inQ = cube.contains(x)
    R = cube.side
    rhs_avg = avg_integral(V2, cube.scaled(5.0), g)
    # differences at round-off level of |V| count as exact zeros
    floor = (1e-12 * math.sqrt(float(V2.max()))) ** 2 if V2.size else 0.0
    ratios = []
    for k in h_steps:
        worst = 0.0
        for ax in range(g.n):
            idx = np.argwhere(inQ)
            shifted = idx.copy()
            shifted[:, ax] += k
            if shifted[:, ax].max() >= g.shape[ax]:
                raise ResolutionError("translation leaves the grid")
            d = V[tuple(shifted.T)] - V[tuple(idx.T)]
            lhs = float(np.mean(np.einsum("...ij,...ij->...", d, d)))
            worst = max(worst, lhs if lhs > floor else 0.0)
        hh = k * g.h
        ratios.append(_ratio(worst, hh ** 2 / R ** 2 * rhs_avg) if rhs_avg > 0 else (1.0 if worst == 0 else math.inf))
    r = np.asarray(ratios)
    hs = np.asarray(h_steps, dtype=float) * g.h
    if np.all(r > 0) and np.all(np.isfinite(r)) and len(r) > 1:
        slope = float(np.polyfit(np.log(hs), np.log(r), 1)[0])
    else:
        slope = 0.0
    passed = bool(np.all(np.isfinite(r)) and -0.5 <= slope <= 0.5)
    return DQBand(tuple(int(k) for k in h_steps), tuple(float(a) for a in r), slope,
                  float(r.min()), float(r.max()), passed)
