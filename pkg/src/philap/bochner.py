"""Averaged, cutoff-weighted mixed space-time norms.

``||f||_{L^s(L^r)(k)} = ( avg_t ( avg_x f^r zeta_k^q )^(s/r) )^(1/s)``:
the inner norm is spatial with weight ``zeta_k^q``, the outer one temporal.
Infinite exponents are suprema over cells (frames) where the weight exceeds
``1e-12``.  Values are arrays of shape ``(frames,) + spatial shape``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SpecError

__all__ = ["MixedNormSpec", "mixed_norm", "holder_check", "interpolation_check",
           "cutoff_weights", "weak_type_gap"]

INF = math.inf
_SUPPORT = 1e-12


@dataclass(frozen=True)
class MixedNormSpec:
    s: float            # outer (time) exponent
    r: float            # inner (space) exponent
    k: int | None = None

    def __post_init__(self):
        for e in (self.s, self.r):
            if not (e >= 1):
                raise SpecError(f"exponents must be >= 1 or inf, got {e}")


def _inner(f, w, r):
    axes = tuple(range(1, f.ndim))
    if math.isinf(r):
        masked = np.where(w > _SUPPORT, f, -np.inf)
        out = masked.max(axis=axes)
        return np.where(np.isfinite(out), out, 0.0)
    count = np.prod(f.shape[1:])
    # factor out the largest value so large exponents do not overflow
    M = f.max(axis=axes, keepdims=True)
    safe = np.where(M > 0, M, 1.0)
    return M.reshape(-1) * (np.sum((f / safe) ** r * w, axis=axes) / count) ** (1.0 / r)


def _outer(g, present, s):
    if math.isinf(s):
        return float(np.max(np.where(present, g, 0.0), initial=0.0))
    M = float(g.max(initial=0.0))
    if M == 0:
        return 0.0
    return M * float(np.mean((g / M) ** s) ** (1.0 / s))


def cutoff_weights(cutoffs, k, grid, times, q=None):
    """``zeta_k^q`` sampled on the space-time grid."""
    c = cutoffs[k]
    return c.values(grid, times) ** (c.q if q is None else q)


def mixed_norm(f, spec: MixedNormSpec, weight=None, region_mask=None):
    """Mixed norm of ``f >= 0``.

    ``weight`` is ``zeta^q`` on the same space-time grid (default 1);
    ``region_mask`` (space-time or spatial) restricts the cells over which
    both averages are taken, cells-by-center.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim < 2:
        raise SpecError("values need a time axis and at least one space axis")
    if np.any(f < 0):
        raise SpecError("mixed norms are taken of non-negative functions")
    w = np.ones_like(f) if weight is None else np.broadcast_to(np.asarray(weight, dtype=float), f.shape)
    if region_mask is not None:
        mask = np.broadcast_to(np.asarray(region_mask, dtype=bool), f.shape)
        # restrict to the bounding frames and cells of the region
        tsel = np.any(mask.reshape(f.shape[0], -1), axis=1)
        ssel = np.any(mask, axis=0)
        f = f[tsel][:, ssel]
        w = np.where(mask, w, 0.0)[tsel][:, ssel]
        f = f.reshape(f.shape[0], -1)
        w = w.reshape(w.shape[0], -1)
    g = _inner(f, w, spec.r)
    present = np.any(w.reshape(w.shape[0], -1) > _SUPPORT, axis=1)
    return _outer(g, present, spec.s)


def _recip(p):
    return 0.0 if math.isinf(p) else 1.0 / p


def _match(a, b, c, tol=1e-12):
    return abs(_recip(a) - (_recip(b) + _recip(c))) <= tol


def holder_check(f, g, exps_time, exps_space, weight=None, region_mask=None):
    """``||f||_(p1,q1) ||g||_(p2,q2) - ||f g||_(p,q)``; non-negative by Hoelder.

    ``exps_time = (p, p1, p2)`` and ``exps_space = (q, q1, q2)`` with
    ``1/p = 1/p1 + 1/p2`` and ``1/q = 1/q1 + 1/q2``.
    """
    p, p1, p2 = exps_time
    q, q1, q2 = exps_space
    if not (_match(p, p1, p2) and _match(q, q1, q2)):
        raise SpecError("Hoelder exponents are not conjugate")
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    lhs = mixed_norm(f * g, MixedNormSpec(p, q), weight, region_mask)
    rhs = (mixed_norm(f, MixedNormSpec(p1, q1), weight, region_mask)
           * mixed_norm(g, MixedNormSpec(p2, q2), weight, region_mask))
    return rhs - lhs


def interpolation_exponents(theta, e0, e1):
    """``(p, q)`` with ``1/p = theta/p1 + (1-theta)/p0`` and likewise for ``q``."""
    (p0, q0), (p1, q1) = e0, e1
    rp = theta * _recip(p1) + (1 - theta) * _recip(p0)
    rq = theta * _recip(q1) + (1 - theta) * _recip(q0)
    return (INF if rp == 0 else 1.0 / rp, INF if rq == 0 else 1.0 / rq)


def interpolation_check(f, theta, e0, e1, target=None, weight=None, region_mask=None):
    """``||f||_(p1,q1)^theta ||f||_(p0,q0)^(1-theta) - ||f||_(p,q)``.

    ``(p, q)`` defaults to the interpolated pair; a given ``target`` must
    match it.
    """
    if not 0 <= theta <= 1:
        raise SpecError("theta must lie in [0, 1]")
    pq = interpolation_exponents(theta, e0, e1)
    if target is not None:
        if not all(abs(_recip(a) - _recip(b)) <= 1e-12 for a, b in zip(target, pq)):
            raise SpecError("target exponents do not satisfy the interpolation relation")
        pq = tuple(target)
    n0 = mixed_norm(f, MixedNormSpec(*e0), weight, region_mask)
    n1 = mixed_norm(f, MixedNormSpec(*e1), weight, region_mask)
    n = mixed_norm(f, MixedNormSpec(*pq), weight, region_mask)
    if theta == 0:
        return n0 - n
    if theta == 1:
        return n1 - n
    return n1 ** theta * n0 ** (1 - theta) - n


def weak_type_gap(v, gamma, spec: MixedNormSpec, weight=None, region_mask=None):
    """``||v chi_{v>gamma}|| - gamma ||chi_{v>gamma}||``; non-negative for ``gamma >= 0``."""
    v = np.asarray(v, dtype=float)
    chi = (v > gamma).astype(float)
    return (mixed_norm(v * chi, spec, weight, region_mask)
            - gamma * mixed_norm(chi, spec, weight, region_mask))
