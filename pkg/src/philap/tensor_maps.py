"""The flux ``A(Q) = phi'(|Q|) Q/|Q|`` and ``V(Q) = psi'(|Q|) Q/|Q|``.

Matrices are numpy arrays whose last two axes are ``(n, m)``; leading axes are
batch axes, so every map here acts on stacks of matrices at once.  The scan
utilities sample random matrix tuples and report observed ratio bands for the
equivalences between ``A``, ``V``, ``phi''`` and the shifted N-functions.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DomainError, QuadratureError, SingularPointError
from .nfunction import NFunction, dyadic_quad

__all__ = [
    "frob", "A_map", "V_map", "jacobian_A", "shifted_phi", "shifted_d1",
    "relation_ratios", "equivalence_scan", "EquivalenceBand",
    "segment_integral", "segment_integral_check", "RELATIONS",
]

_TINY = 1e-300

# relation name -> two-sided ("~") or one-sided upper bound ("<~")
RELATIONS = {
    "b": "upper",
    "c": "two-sided",
    "d1": "two-sided",
    "d2": "two-sided",
    "d3": "two-sided",
    "e": "upper",
    "segment_integral": "two-sided",
}
_ALIASES = {"d": "d3"}


def frob(Q):
    """Frobenius norm over the last two axes."""
    Q = np.asarray(Q, dtype=float)
    return np.sqrt(np.einsum("...ij,...ij->...", Q, Q))


def _scaled(factor_fn, Q):
    Q = np.asarray(Q, dtype=float)
    r = frob(Q)
    safe = np.where(r < _TINY, 1.0, r)
    f = np.where(r < _TINY, 0.0, factor_fn(safe) / safe)
    return f[..., None, None] * Q


def A_map(nf: NFunction, Q):
    """``phi'(|Q|)/|Q| * Q``, zero at ``Q = 0``."""
    return _scaled(nf.d1, Q)


def V_map(nf: NFunction, Q):
    """``psi'(|Q|)/|Q| * Q`` with ``psi'(t) = sqrt(t phi'(t))``, zero at ``Q = 0``."""
    return _scaled(lambda t: np.sqrt(t * nf.d1(t)), Q)


def jacobian_A(nf: NFunction, P):
    """``J[i, j, k, l] = d A_kl / d P_ij`` in closed form.

    ``J = a (I (x) I) + (phi''(|P|) - a) P (x) P / |P|^2`` with
    ``a = phi'(|P|)/|P|``.
    """
    P = np.asarray(P, dtype=float)
    r = frob(P)
    if np.any(r == 0):
        raise SingularPointError("the Jacobian of A does not exist at P = 0")
    n, m = P.shape[-2:]
    a = nf.d1_over_t(r)
    b = nf.d2(r) - a
    eye = np.einsum("ik,jl->ijkl", np.eye(n), np.eye(m))
    outer = np.einsum("...ij,...kl->...ijkl", P, P) / (r ** 2)[..., None, None, None, None]
    return a[..., None, None, None, None] * eye + b[..., None, None, None, None] * outer


def shifted_d1(nf: NFunction, lam, t):
    """``phi_lam'(t)`` for array-valued shifts ``lam``."""
    lam = np.asarray(lam, dtype=float)
    t = np.asarray(t, dtype=float)
    return nf.d1_over_t(lam + t) * t


def shifted_phi(nf: NFunction, lam, t):
    """``phi_lam(t) = int_0^t phi_lam'`` for array-valued shifts ``lam``.

    A shift of zero reproduces ``phi`` exactly.
    """
    lam, t = np.broadcast_arrays(np.asarray(lam, dtype=float), np.asarray(t, dtype=float))
    out = np.asarray(dyadic_quad(lambda s: nf.d1_over_t(lam[..., None] + s) * s, t))
    zero = lam == 0
    if np.any(zero):
        out = np.where(zero, nf(np.where(zero, t, 0.0)), out)
    return out


def segment_integral(nf: NFunction, P, Q):
    """``int_0^1 phi'(|P + s(Q-P)|)/|P + s(Q-P)| ds`` for stacks of pairs.

    The interval is split at the point of the segment nearest the origin and
    each half is integrated with panels graded towards that point, which
    handles the integrable ``|x|^(p-2)`` singularity for ``p < 2``.
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    D = Q - P
    dd = np.einsum("...ij,...ij->...", D, D)
    s0 = np.where(dd > 0, -np.einsum("...ij,...ij->...", P, D) / np.where(dd > 0, dd, 1.0), 0.0)
    s0 = np.clip(s0, 0.0, 1.0)
    X0 = P + s0[..., None, None] * D

    def integrand(sign):
        # offsets from the nearest point, so tiny u is not lost to rounding
        def f(u):
            X = X0[..., None, :, :] + (sign * u)[..., None, None] * D[..., None, :, :]
            r = frob(X)
            return nf.d1_over_t(r)
        return f

    right = dyadic_quad(integrand(+1.0), 1.0 - s0)
    left = dyadic_quad(integrand(-1.0), s0)
    return right + left


def segment_integral_check(nf: NFunction, P, Q):
    """Ratio of the segment integral to ``phi'(|P|+|Q|)/(|P|+|Q|)``.

    Single pair, adaptive quadrature with a breakpoint at the point nearest
    the origin.
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    tot = float(frob(P) + frob(Q))
    if tot <= 0:
        raise DomainError("segment integral needs |P| + |Q| > 0")
    D = Q - P
    dd = float(np.sum(D * D))
    s0 = min(max(-float(np.sum(P * D)) / dd, 0.0), 1.0) if dd > 0 else 0.0

    def f(s):
        return float(nf.d1_over_t(frob(P + s * D)))

    pts = [s0] if 0.0 < s0 < 1.0 else None
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(f, 0.0, 1.0, points=pts, epsabs=0.0,
                                    epsrel=1e-10, limit=200)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(str(exc)) from None
    return val / float(nf.d1_over_t(tot))


def relation_ratios(nf: NFunction, which, P, Q, R=None):
    """Ratios LHS/RHS for one relation over stacks of matrices.

    Entries whose ratio is 0/0 (coincident arguments) are dropped.
    """
    which = _ALIASES.get(which, which)
    if which not in RELATIONS:
        raise DomainError(f"unknown relation {which!r}")
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    nP, nQ = frob(P), frob(Q)
    dist = frob(P - Q)
    keep = dist > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        if which == "b":
            num = frob(A_map(nf, P) - A_map(nf, Q))
            den = nf.d2(nP + nQ) * dist
        elif which == "c":
            num = nf.d2(nP + nQ) * dist
            den = shifted_d1(nf, nP, dist)
        elif which == "d1":
            num = dist ** 2 * nf.d2(nP + nQ)
            den = shifted_phi(nf, nP, dist)
        elif which == "d2":
            num = shifted_phi(nf, nP, dist)
            den = frob(V_map(nf, P) - V_map(nf, Q)) ** 2
        elif which == "d3":
            num = frob(V_map(nf, P) - V_map(nf, Q)) ** 2
            den = np.einsum("...ij,...ij->...", A_map(nf, P) - A_map(nf, Q), P - Q)
        elif which == "e":
            if R is None:
                raise DomainError("relation e needs a third matrix R")
            R = np.asarray(R, dtype=float)
            nR = frob(R)
            num = shifted_d1(nf, nP, dist)
            den = shifted_d1(nf, nR, frob(P - R)) + shifted_d1(nf, nR, frob(Q - R))
        else:
            keep = (nP + nQ) > 0
            Pf, Qf = P.reshape(-1, *P.shape[-2:]), Q.reshape(-1, *Q.shape[-2:])
            # chunked: the quadrature nodes multiply memory by ~700
            num = np.concatenate([segment_integral(nf, Pf[i:i + 512], Qf[i:i + 512])
                                  for i in range(0, len(Pf), 512)]).reshape(nP.shape)
            den = nf.d1_over_t(nP + nQ)
        ratio = num / den
    return ratio[keep & np.isfinite(ratio)]


@dataclass(frozen=True)
class EquivalenceBand:
    which: str
    lo: float
    hi: float
    samples: int
    kind: str = "two-sided"
    nf: str = ""
    n: int = 0
    m: int = 0
    seed: int | None = None

    @property
    def spread(self):
        return self.hi / self.lo if self.samples else float("nan")

    def ok(self, max_spread=1e4):
        """Bounded above, and for two-sided relations also away from zero
        with ``hi/lo <= max_spread``."""
        if self.samples == 0:
            return True
        if not np.isfinite(self.hi):
            return False
        if self.kind == "upper":
            return True
        return self.lo > 0 and self.spread <= max_spread


def band_from_ratios(which, ratios, **meta):
    which = _ALIASES.get(which, which)
    ratios = np.asarray(ratios, dtype=float)
    if ratios.size == 0:
        return EquivalenceBand(which, float("nan"), float("nan"), 0, RELATIONS[which], **meta)
    return EquivalenceBand(which, float(ratios.min()), float(ratios.max()), int(ratios.size),
                           RELATIONS[which], **meta)


def random_matrices(rng, trials, n, m, magnitude=(1e-3, 1e3)):
    """Entries uniform in [-1, 1] times a log-uniform scale per matrix."""
    lo, hi = magnitude
    if not (0 < lo <= hi):
        raise DomainError("magnitude range must be positive")
    scale = np.exp(rng.uniform(np.log(lo), np.log(hi), size=trials))
    return rng.uniform(-1.0, 1.0, size=(trials, n, m)) * scale[:, None, None]


def equivalence_scan(nf: NFunction, which, trials=10_000, dims=(3, 3),
                     magnitude=(1e-3, 1e3), seed=0) -> EquivalenceBand:
    """Observed band of one relation over random matrix tuples."""
    n, m = dims
    if trials < 1:
        raise DomainError("need at least one trial")
    if not (1 <= n <= 8 and 1 <= m <= 8):
        raise DomainError("dims must lie in 1..8")
    rng = np.random.default_rng(seed)
    P = random_matrices(rng, trials, n, m, magnitude)
    Q = random_matrices(rng, trials, n, m, magnitude)
    R = random_matrices(rng, trials, n, m, magnitude)
    ratios = relation_ratios(nf, which, P, Q, R)
    return band_from_ratios(which, ratios, nf=str(nf), n=n, m=m, seed=seed)
