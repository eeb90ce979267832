"""N-functions and their scalar calculus.

An N-function is generated by its derivative ``d1`` (non-decreasing, zero at
zero, positive elsewhere).  Every family below provides

* ``d1(t)``  -- the derivative,
* ``d2(t)``  -- the second derivative,
* ``__call__(t)`` -- the function itself, ``int_0^t d1``,

vectorised over numpy arrays.  Shifted N-functions and the companion ``psi``
(``psi'(t) = sqrt(t d1(t))``) are N-functions too, so every diagnostic in this
module applies to them unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize

from .errors import BracketError, ConfigError, ConjugateError, DomainError

__all__ = [
    "NFunction", "Power", "PowerLog", "Tabulated", "Shifted", "Psi",
    "phi", "phi_star", "conjugate_identity_ratio", "delta2_estimate",
    "young_gap", "luxemburg_norm", "shifted_props", "psi_props",
    "Delta2Report", "ShiftedReport", "PsiReport", "log_grid",
    "parse_nfunction", "cutoff_exponent",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)
_DYADIC_LEVELS = 60


def dyadic_quad(f, t):
    """Integrate ``f`` over ``[0, t]`` elementwise.

    The interval is cut into dyadic panels ``[t 2^-(j+1), t 2^-j]`` with a
    12-point Gauss rule on each, which resolves integrands that are
    non-smooth or mildly singular at the origin (``s^(p-1)`` with ``p < 2``,
    or a transition at an unknown small scale).  ``f`` receives an array of
    shape ``t.shape + (K,)`` and must broadcast any parameters with
    ``[..., None]``.
    """
    t = np.asarray(t, dtype=float)
    j = np.arange(_DYADIC_LEVELS + 1)
    upper = 2.0 ** (-j)
    lower = np.append(upper[1:], 0.0)
    half = 0.5 * (upper - lower)
    mid = 0.5 * (upper + lower)
    # unit-interval nodes, shape (levels+1, 12)
    x = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    w = half[:, None] * _GL_WEIGHTS[None, :]
    s = t[..., None] * x.ravel()
    vals = f(s)
    return t * np.sum(vals * w.ravel(), axis=-1)


def log_grid(t_lo=1e-6, t_hi=1e6, samples=1024):
    if not (0 < t_lo < t_hi):
        raise DomainError(f"need 0 < t_lo < t_hi, got {t_lo}, {t_hi}")
    return np.geomspace(t_lo, t_hi, samples)


class NFunction:
    """Common interface.  Subclasses override ``d1``, ``d2`` and optionally
    ``__call__``, ``d1_over_t``, ``inverse_d1`` and ``conjugate`` with
    closed forms."""

    domain_cap = math.inf

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise DomainError("N-functions are evaluated at t >= 0")
        if np.any(t > self.domain_cap):
            raise DomainError(f"argument exceeds domain cap {self.domain_cap}")
        return t

    def d1(self, t):
        raise NotImplementedError

    def d2(self, t):
        raise NotImplementedError

    def __call__(self, t):
        t = self._check(t)
        return dyadic_quad(self.d1, t)

    def d1_over_t(self, t):
        """``d1(t)/t``, continued by its limit where the quotient is 0/0."""
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.d1(t) / t
        if np.any(t == 0):
            out = np.where(t == 0, self.d2(np.zeros_like(t)), out)
        return out

    def inverse_d1(self, y):
        """Right inverse of ``d1`` by bracketing and bisection (rel. tol 1e-12)."""
        y = np.asarray(y, dtype=float)
        if np.any(y < 0):
            raise DomainError("inverse of the derivative needs y >= 0")
        out = np.zeros_like(y)
        pos = y > 0
        if not np.any(pos):
            return out
        yp = y[pos]
        cap = self.domain_cap
        if np.isfinite(cap) and np.any(self.d1(np.full_like(yp, cap)) < yp):
            raise DomainError("inverse derivative beyond the domain cap")
        hi = np.minimum(np.ones_like(yp), cap)
        for _ in range(2100):
            below = self.d1(hi) < yp
            if not np.any(below):
                break
            hi = np.where(below, np.minimum(hi * 2.0, cap), hi)
        else:
            raise BracketError("could not bracket the inverse derivative")
        lo = hi.copy()
        for _ in range(2100):
            above = self.d1(lo) >= yp
            if not np.any(above):
                break
            lo = np.where(above, lo * 0.5, lo)
        else:
            raise BracketError("could not bracket the inverse derivative")
        hi = np.minimum(2.0 * lo, hi)
        huge = ~np.isfinite(hi)          # preimage beyond the float range
        lo = np.where(huge, 1.0, lo)
        hi = np.where(huge, 2.0, hi)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            up = self.d1(mid) >= yp
            hi = np.where(up, mid, hi)
            lo = np.where(up, lo, mid)
            if np.all(hi - lo <= 1e-13 * hi):
                break
        out[pos] = np.where(huge, np.inf, 0.5 * (lo + hi))
        return out

    def conjugate(self, t, method="legendre"):
        """Complementary function ``phi*``.

        ``method="legendre"`` uses ``phi*(phi'(s)) = s phi'(s) - phi(s)`` at the
        bisected preimage; ``method="quadrature"`` integrates the inverse
        derivative directly.  The two agree for continuous strictly
        increasing derivatives.
        """
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise DomainError("phi* is evaluated at t >= 0")
        if method == "legendre":
            with np.errstate(over="ignore", invalid="ignore"):
                s = self.inverse_d1(t)
                fin = np.isfinite(s)
                val = np.maximum(t * s - self(np.where(fin, s, 0.0)), 0.0)
            return np.where(fin, val, np.inf)
        if method == "quadrature":
            return dyadic_quad(self.inverse_d1, t)
        raise ValueError(f"unknown conjugate method {method!r}")

    def shifted(self, lam):
        return Shifted(self, lam)

    def psi(self):
        return Psi(self)


@dataclass(frozen=True)
class Power(NFunction):
    """``phi(t) = t^p`` with every derived quantity in closed form."""

    p: float

    def __post_init__(self):
        if not self.p > 1:
            raise ConfigError(f"Power needs p > 1, got {self.p}")

    def __call__(self, t):
        return self._check(t) ** self.p

    def d1(self, t):
        return self.p * np.asarray(t, dtype=float) ** (self.p - 1)

    def d2(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return self.p * (self.p - 1) * t ** (self.p - 2)

    def d1_over_t(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return self.p * t ** (self.p - 2)

    def inverse_d1(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(y < 0):
            raise DomainError("inverse of the derivative needs y >= 0")
        return (y / self.p) ** (1.0 / (self.p - 1))

    def conjugate(self, t, method="closed"):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise DomainError("phi* is evaluated at t >= 0")
        if method in ("legendre", "quadrature"):
            return NFunction.conjugate(self, t, method)
        p = self.p
        pc = p / (p - 1)
        return (p - 1) * p ** (-pc) * t ** pc

    def __str__(self):
        return f"power:{self.p:g}"


@dataclass(frozen=True)
class PowerLog(NFunction):
    """``phi(t) = scale * t log(1 + t)``."""

    scale: float = 1.0

    def __call__(self, t):
        t = self._check(t)
        return self.scale * t * np.log1p(t)

    def d1(self, t):
        t = np.asarray(t, dtype=float)
        return self.scale * (np.log1p(t) + t / (1 + t))

    def d2(self, t):
        t = np.asarray(t, dtype=float)
        return self.scale * (2 + t) / (1 + t) ** 2

    def d1_over_t(self, t):
        t = np.asarray(t, dtype=float)
        # log1p(t)/t -> 1 at 0; keep it accurate for tiny t
        with np.errstate(divide="ignore", invalid="ignore"):
            l = np.where(t > 1e-8, np.log1p(t) / np.where(t > 0, t, 1.0), 1 - t / 2)
        return self.scale * (l + 1 / (1 + t))

    def __str__(self):
        return "powerlog" if self.scale == 1.0 else f"powerlog:{self.scale:g}"


class Tabulated(NFunction):
    """Derivative given on a grid, linearly interpolated.

    ``phi`` is then piecewise quadratic and integrated exactly; ``d2`` comes
    from finite differences of the table.
    """

    def __init__(self, t, dphi, domain_cap=None):
        t = np.asarray(t, dtype=float)
        dphi = np.asarray(dphi, dtype=float)
        if t.ndim != 1 or t.shape != dphi.shape or t.size < 2:
            raise ConfigError("tabulated derivative needs two equal-length columns")
        if np.any(np.diff(t) <= 0):
            raise ConfigError("tabulated t must be strictly increasing")
        if t[0] < 0:
            raise ConfigError("tabulated t must be non-negative")
        if t[0] > 0:
            t = np.concatenate([[0.0], t])
            dphi = np.concatenate([[0.0], dphi])
        if dphi[0] != 0:
            raise ConfigError("tabulated derivative must vanish at 0")
        if np.any(dphi[1:] <= 0):
            raise ConfigError("tabulated derivative must be positive for t > 0")
        if np.any(np.diff(dphi) < 0):
            raise ConfigError("tabulated derivative must be non-decreasing")
        self.t = t
        self.dphi = dphi
        self.domain_cap = float(t[-1] if domain_cap is None else min(domain_cap, t[-1]))
        self._cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (dphi[1:] + dphi[:-1]))])
        self._slope = np.gradient(dphi, t)

    @classmethod
    def from_file(cls, path, domain_cap=None):
        data = np.loadtxt(path, dtype=float, comments="#", ndmin=2)
        if data.shape[1] != 2:
            raise ConfigError(f"{path}: expected two columns (t, dphi)")
        return cls(data[:, 0], data[:, 1], domain_cap)

    def d1(self, t):
        return np.interp(self._check(t), self.t, self.dphi)

    def d2(self, t):
        return np.interp(self._check(t), self.t, self._slope)

    def __call__(self, t):
        t = self._check(t)
        i = np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, self.t.size - 2)
        dt = t - self.t[i]
        return self._cum[i] + 0.5 * dt * (self.dphi[i] + self.d1(t))

    def _flat_check(self):
        widths = np.diff(self.t)
        flat = np.diff(self.dphi) <= 0
        if np.any(flat & (widths > 1e-12 * self.t[1:])):
            raise ConjugateError("tabulated derivative has a flat segment; "
                                 "its inverse is not single-valued")

    def inverse_d1(self, y):
        self._flat_check()
        return NFunction.inverse_d1(self, y)

    def conjugate(self, t, method="legendre"):
        self._flat_check()
        return NFunction.conjugate(self, t, method)

    def __repr__(self):
        return f"Tabulated(knots={self.t.size}, domain_cap={self.domain_cap:g})"

    __str__ = __repr__


class Shifted(NFunction):
    """``phi_lam'(t) = phi'(lam + t) t / (lam + t)``."""

    def __init__(self, base: NFunction, lam: float):
        if lam < 0:
            raise DomainError("shift must be >= 0")
        self.base = base
        self.lam = float(lam)
        self.domain_cap = base.domain_cap - self.lam

    def d1(self, t):
        t = np.asarray(t, dtype=float)
        if self.lam == 0:
            return self.base.d1(t)
        return self.base.d1_over_t(self.lam + t) * t

    def d1_over_t(self, t):
        if self.lam == 0:
            return self.base.d1_over_t(t)
        return self.base.d1_over_t(self.lam + np.asarray(t, dtype=float))

    def d2(self, t):
        t = np.asarray(t, dtype=float)
        if self.lam == 0:
            return self.base.d2(t)
        a = self.lam + t
        return self.base.d2(a) * t / a + self.base.d1(a) * self.lam / a ** 2

    def __call__(self, t):
        if self.lam == 0:
            return self.base(t)
        return NFunction.__call__(self, t)

    def __repr__(self):
        return f"Shifted({self.base}, lam={self.lam:g})"


class Psi(NFunction):
    """Companion ``psi`` with ``psi'(t) = sqrt(t phi'(t))``."""

    def __init__(self, base: NFunction):
        self.base = base
        self.domain_cap = base.domain_cap

    def d1(self, t):
        t = np.asarray(t, dtype=float)
        return np.sqrt(t * self.base.d1(t))

    def d1_over_t(self, t):
        return np.sqrt(self.base.d1_over_t(t))

    def d2(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return (self.base.d1(t) + t * self.base.d2(t)) / (2 * np.sqrt(t * self.base.d1(t)))

    def __call__(self, t):
        if isinstance(self.base, Power):
            t = self._check(t)
            e = self.base.p / 2 + 1
            return math.sqrt(self.base.p) * t ** e / e
        return NFunction.__call__(self, t)

    def __repr__(self):
        return f"Psi({self.base})"


# -- module-level operations -------------------------------------------------


def phi(nf: NFunction, t):
    return nf(t)


def phi_star(nf: NFunction, t, method=None):
    return nf.conjugate(t) if method is None else nf.conjugate(t, method)


def conjugate_identity_ratio(nf: NFunction, s):
    """``phi*(phi'(s)) / phi(s)``; constant ``p - 1`` for ``Power(p)``."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise DomainError("the conjugate identity ratio needs s > 0")
    return nf.conjugate(nf.d1(s)) / nf(s)


@dataclass(frozen=True)
class Delta2Report:
    constant: float
    grid_min: float
    grid_max: float
    assumption_band: tuple
    samples: int = 0


def delta2_estimate(nf: NFunction, t_lo=1e-6, t_hi=1e6, samples=1024) -> Delta2Report:
    """Grid supremum of ``phi(2t)/phi(t)`` and band of ``phi''(t) t / phi'(t)``."""
    if samples < 16:
        raise DomainError("delta2_estimate needs at least 16 samples")
    t = log_grid(t_lo, t_hi, samples)
    ratio = nf(2 * t) / nf(t)
    band = nf.d2(t) * t / nf.d1(t)
    return Delta2Report(
        constant=float(max(1.0, ratio.max())),
        grid_min=float(t_lo), grid_max=float(t_hi),
        assumption_band=(float(band.min()), float(band.max())),
        samples=samples,
    )


def young_gap(nf: NFunction, s, t):
    """``phi(s) + phi*(t) - s t``, non-negative by Young's inequality."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    return nf(s) + nf.conjugate(t) - s * t


def luxemburg_norm(values, nf: NFunction, weights=None, rtol=1e-10):
    """``inf{t > 0 : sum_i w_i phi(|u_i| / t) <= 1}``.

    ``weights`` default to ``1/len(values)`` (a unit-measure domain).
    """
    u = np.abs(np.asarray(values, dtype=float)).ravel()
    w = (np.full(u.shape, 1.0 / max(u.size, 1)) if weights is None
         else np.asarray(weights, dtype=float).ravel())
    if w.shape != u.shape:
        raise DomainError("values and weights differ in length")
    if np.any(w <= 0):
        raise DomainError("weights must be positive")
    if u.size == 0 or not np.any(u > 0):
        return 0.0

    def modular(t):
        try:
            return float(np.sum(w * nf(u / t)))
        except DomainError:
            return math.inf

    # bracket and solve in log t so that endpoints are evaluated exactly as bracketed
    g = lambda x: modular(math.exp(x)) - 1.0
    hi = lo = math.log(float(u.max()))
    for _ in range(200):
        if g(hi) <= 0:
            break
        hi += math.log(2.0)
    else:
        raise BracketError("no upper bracket for the Luxemburg norm")
    for _ in range(200):
        if g(lo) > 0:
            break
        lo -= math.log(2.0)
    else:
        raise BracketError("no lower bracket for the Luxemburg norm")
    if g(hi) == 0:
        return math.exp(hi)
    # modular is continuous and decreasing in t
    root = optimize.brentq(g, lo, hi, xtol=rtol * 0.1, rtol=1e-15)
    return math.exp(root)


@dataclass(frozen=True)
class ShiftedReport:
    lambdas: tuple
    delta2_by_lambda: tuple
    delta2_sup: float
    eps: float
    eps_constant: float
    k2_band: tuple


def shifted_props(nf: NFunction, lambdas=(0.0, 1.0, 10.0), grid=None,
                  k_grid=None) -> ShiftedReport:
    """Uniform-in-shift diagnostics.

    Returns the shifted Delta2 constant per shift and overall, the fitted
    exponent ``eps`` with ``phi_lam(k t) <= C k^(1+eps) phi_lam(t)`` for
    ``k`` in (0, 1], and the band of ``phi_lam(k lam) / (k^2 phi(lam))``.
    """
    t = log_grid(1e-3, 1e3, 48) if grid is None else np.asarray(grid, dtype=float)
    if np.any(t <= 0):
        raise DomainError("grid must be positive")
    k = np.geomspace(1e-4, 1.0, 24)[:-1] if k_grid is None else np.asarray(k_grid, dtype=float)
    d2s, exps, ratios_k2 = [], [], []
    for lam in lambdas:
        sh = nf.shifted(lam)
        base_vals = sh(t)
        d2s.append(float(max(1.0, np.max(sh(2 * t) / base_vals))))
        kt = sh(k[:, None] * t[None, :])
        exps.append(np.log(kt / base_vals[None, :]) / np.log(k)[:, None])
        if lam > 0:
            kk = np.geomspace(1e-4, 1.0, 32)
            ratios_k2.append(sh(kk * lam) / (kk ** 2 * nf(lam)))
    exps = np.concatenate([e.ravel() for e in exps])
    eps = float(exps.min() - 1.0)
    # with eps taken as the smallest secant exponent the ratio is <= 1
    const = 1.0
    for lam in lambdas:
        sh = nf.shifted(lam)
        r = sh(k[:, None] * t[None, :]) / (k[:, None] ** (1 + eps) * sh(t)[None, :])
        const = max(const, float(r.max()))
    band = (float("nan"), float("nan"))
    if ratios_k2:
        allr = np.concatenate(ratios_k2)
        band = (float(allr.min()), float(allr.max()))
    return ShiftedReport(tuple(float(l) for l in lambdas), tuple(d2s), max(d2s),
                         eps, const, band)


def cutoff_exponent(eps: float) -> float:
    """Power ``q`` for cutoffs so that ``phi(eta^(q-1) t) <= eta^q phi(t)``."""
    if eps <= 0:
        raise DomainError("need a positive exponent gap")
    return max(2.5, (1 + eps) / eps)


@dataclass(frozen=True)
class PsiReport:
    index_band: tuple
    sqrt_band: tuple


def psi_props(nf: NFunction, grid=None) -> PsiReport:
    """Bands of ``psi'' t / psi'`` and ``psi'' / sqrt(phi'')``."""
    t = log_grid(1e-6, 1e6, 512) if grid is None else np.asarray(grid, dtype=float)
    ps = nf.psi()
    idx = ps.d2(t) * t / ps.d1(t)
    sq = ps.d2(t) / np.sqrt(nf.d2(t))
    return PsiReport((float(idx.min()), float(idx.max())), (float(sq.min()), float(sq.max())))


# -- configuration -------------------------------------------------------------


def _parse_kv(text):
    out = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key = value, got {raw!r}")
        k, v = line.split("=", 1)
        out[k.strip().lower()] = v.strip()
    return out


def parse_nfunction(spec) -> NFunction:
    """Build an N-function from a short form or a key-value config.

    Accepted: an ``NFunction`` (returned as is), ``"power:2.5"``,
    ``"powerlog"``, ``"tabulated:<path>"``, a path to a ``key = value`` file
    (``family = power``, ``p = 2.5`` or ``family = tabulated``,
    ``file = <path>``), or the key-value text itself.
    """
    if isinstance(spec, NFunction):
        return spec
    spec = str(spec).strip()
    base_dir = Path(".")
    path = Path(spec)
    if "\n" not in spec and "=" not in spec and path.is_file():
        base_dir = path.parent
        spec = path.read_text()
    if "=" not in spec:
        family, _, arg = spec.partition(":")
        kv = {"family": family}
        if family.strip().lower() == "power":
            kv["p"] = arg
        elif family.strip().lower() == "tabulated":
            kv["file"] = arg
        elif arg:
            kv["scale"] = arg
    else:
        kv = _parse_kv(spec)
    family = kv.get("family", "").strip().lower()
    try:
        if family == "power":
            return Power(float(kv["p"]))
        if family == "powerlog":
            return PowerLog(float(kv.get("scale") or 1.0))
        if family == "tabulated":
            f = Path(kv["file"])
            if not f.is_absolute():
                f = base_dir / f
            cap = kv.get("domain_cap")
            return Tabulated.from_file(f, float(cap) if cap else None)
    except KeyError as exc:
        raise ConfigError(f"missing key {exc} for family {family!r}") from None
    except (ValueError, OSError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown N-function family {family!r}")
