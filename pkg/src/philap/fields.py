"""Uniform-grid fields, regions, averaged integrals and smooth cutoffs.

Grids are node based: a grid with ``shape = (N1, ..., Nn)`` has nodes
``origin + h * index``.  Every node stands for the cell of volume ``h^n``
around it, so region membership, averages and sums are cells-by-center.
"""
from __future__ import annotations

import io
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError, EmptyRegionError, ResolutionError

__all__ = [
    "UniformGrid", "VectorField", "GradientField", "SpaceTimeField",
    "Ball", "Cube", "Cylinder", "Cutoff", "ramp",
    "gradient", "make_cutoff_sequence", "make_cylinder_cutoffs",
    "avg_integral", "difference_quotient",
    "save_field", "load_field", "save_csv", "load_csv", "atomic_write",
]


@dataclass(frozen=True)
class UniformGrid:
    shape: tuple
    h: float
    origin: tuple = None

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        object.__setattr__(self, "shape", shape)
        if not 1 <= len(shape) <= 3:
            raise ConfigError("grids have dimension 1, 2 or 3")
        if min(shape) < 3:
            raise ConfigError("every axis needs at least 3 nodes")
        if not self.h > 0:
            raise ConfigError("spacing must be positive")
        origin = (0.0,) * len(shape) if self.origin is None else tuple(float(o) for o in self.origin)
        if len(origin) != len(shape):
            raise ConfigError("origin and shape differ in dimension")
        object.__setattr__(self, "origin", origin)

    @classmethod
    def box(cls, intervals, lo=0.0, hi=1.0, dim=2):
        """``intervals`` cells per axis on ``[lo, hi]^dim``."""
        h = (hi - lo) / intervals
        return cls((intervals + 1,) * dim, h, (lo,) * dim)

    @property
    def n(self):
        return len(self.shape)

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def cell_volume(self):
        return self.h ** self.n

    def axes(self):
        return [o + self.h * np.arange(s) for o, s in zip(self.origin, self.shape)]

    def coords(self):
        """Node coordinates, shape ``shape + (n,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def boundary_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        for ax in range(self.n):
            idx = [slice(None)] * self.n
            idx[ax] = 0
            mask[tuple(idx)] = True
            idx[ax] = -1
            mask[tuple(idx)] = True
        return mask

    def refine(self):
        return UniformGrid(tuple(2 * (s - 1) + 1 for s in self.shape), self.h / 2, self.origin)


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: UniformGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape == self.grid.shape:
            v = v[..., None]
        if v.shape[:-1] != self.grid.shape:
            raise ConfigError(f"values of shape {v.shape} do not fit grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ConfigError("field values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def m(self):
        return self.values.shape[-1]


@dataclass(frozen=True, eq=False)
class GradientField:
    """``values[..., i, j] = d_i u_j``."""

    grid: UniformGrid
    values: np.ndarray

    def norm(self):
        """``v = |grad u|`` (Frobenius) per node."""
        return np.sqrt(np.einsum("...ij,...ij->...", self.values, self.values))


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    grid: UniformGrid
    tau: float
    values: np.ndarray          # shape (frames,) + grid.shape + (m,)
    t0: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == self.grid.n + 1:
            v = v[..., None]
        if v.shape[1:-1] != self.grid.shape:
            raise ConfigError("frames do not fit the grid")
        if v.shape[0] < 2:
            raise ConfigError("a space-time field needs at least two frames")
        if not self.tau > 0:
            raise ConfigError("time step must be positive")
        object.__setattr__(self, "values", v)

    @property
    def frames(self):
        return self.values.shape[0]

    @property
    def times(self):
        return self.t0 + self.tau * np.arange(self.frames)

    def frame(self, k) -> VectorField:
        return VectorField(self.grid, self.values[k])


def gradient(u: VectorField) -> GradientField:
    """Second-order differences, one-sided at the boundary (exact on affine fields)."""
    g = u.grid
    parts = np.gradient(u.values, g.h, axis=tuple(range(g.n)), edge_order=2)
    if g.n == 1:
        parts = [parts]
    return GradientField(g, np.stack(parts, axis=-2))


def gradient_norm(u: VectorField):
    return gradient(u).norm()


# -- regions -------------------------------------------------------------------


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def contains(self, x):
        c = np.asarray(self.center, dtype=float)
        return np.sum((x - c) ** 2, axis=-1) <= self.radius ** 2 * (1 + 1e-12)

    def scaled(self, f):
        return Ball(self.center, self.radius * f)

    def inside(self, grid: UniformGrid):
        lo = np.asarray(grid.origin)
        hi = lo + grid.h * (np.asarray(grid.shape) - 1)
        c = np.asarray(self.center, dtype=float)
        return bool(np.all(c - self.radius >= lo - 1e-12) and np.all(c + self.radius <= hi + 1e-12))


@dataclass(frozen=True)
class Cube:
    """Axis-parallel cube of side length ``side``."""

    center: tuple
    side: float

    def contains(self, x):
        c = np.asarray(self.center, dtype=float)
        return np.all(np.abs(x - c) <= 0.5 * self.side * (1 + 1e-12), axis=-1)

    def scaled(self, f):
        return Cube(self.center, self.side * f)

    def inside(self, grid: UniformGrid):
        return Ball(self.center, 0.5 * self.side).inside(grid)


@dataclass(frozen=True)
class Cylinder:
    """``I x B`` with ``I = [t_center - t_half, t_center + t_half]``."""

    center: tuple
    radius: float
    t_center: float
    t_half: float

    @property
    def ball(self):
        return Ball(self.center, self.radius)

    def time_mask(self, times):
        return np.abs(np.asarray(times) - self.t_center) <= self.t_half * (1 + 1e-12)

    def scaled(self, f):
        """Space and time extents both scaled by ``f``, about the same center."""
        return Cylinder(self.center, self.radius * f, self.t_center, self.t_half * f)

    def inside(self, st: SpaceTimeField):
        t = st.times
        return (self.ball.inside(st.grid) and self.t_center - self.t_half >= t[0] - 1e-12
                and self.t_center + self.t_half <= t[-1] + 1e-12)


def avg_integral(f, region, grid: UniformGrid, times=None):
    """Averaged integral over the cells whose centers lie in ``region``.

    For a ``Cylinder`` the values carry a leading time axis and ``times``
    gives the frame times.
    """
    f = np.asarray(f, dtype=float)
    if isinstance(region, Cylinder):
        if times is None:
            raise DomainError("cylinder averages need frame times")
        tm = region.time_mask(times)
        sm = region.ball.contains(grid.coords())
        mask = tm.reshape((-1,) + (1,) * grid.n) & sm[None]
    else:
        mask = region.contains(grid.coords())
        mask = np.broadcast_to(mask, f.shape)
    count = int(np.count_nonzero(mask))
    if count == 0:
        raise EmptyRegionError("no grid cell lies in the region")
    return float(np.sum(f[mask]) / count)


def difference_quotient(f, axis, steps, h):
    """``(f(x + k h e_axis) - f(x)) / (k h)`` with ``k = steps``.

    Only indices where both values exist are kept, so the result is shorter
    by ``|k|`` along ``axis``.  For ``k < 0`` the same array is the backward
    quotient attached to the upper index set.
    """
    f = np.asarray(f, dtype=float)
    k = abs(int(steps))
    if k == 0:
        raise DomainError("step must be non-zero")
    n = f.shape[axis]
    if k >= n:
        raise DomainError("step exceeds the extent")
    a = np.take(f, np.arange(k, n), axis=axis)
    b = np.take(f, np.arange(0, n - k), axis=axis)
    return (a - b) / (k * h)


# -- cutoffs -------------------------------------------------------------------


def ramp(s):
    """Quintic step: 1 at s <= 0, 0 at s >= 1, C^2, max slope 15/8."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    return np.clip(1.0 - s ** 3 * (10 - 15 * s + 6 * s ** 2), 0.0, 1.0)


def ramp_slope(s):
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    return -30.0 * s ** 2 * (1 - s) ** 2


@dataclass(frozen=True)
class Cutoff:
    """Radial bump: 1 inside ``r_in``, 0 outside ``r_out``, quintic between.

    With ``t_in``/``t_out`` set it is the product with the same profile in
    ``|t - t_center|``.
    """

    center: tuple
    r_in: float
    r_out: float
    q: float = 2.5
    t_center: float | None = None
    t_in: float | None = None
    t_out: float | None = None

    def __post_init__(self):
        if not 0 <= self.r_in < self.r_out:
            raise ConfigError("cutoff needs 0 <= r_in < r_out")
        if not self.q > 2:
            raise ConfigError("cutoff exponent q must exceed 2")

    def _r(self, x):
        c = np.asarray(self.center, dtype=float)
        return np.sqrt(np.sum((x - c) ** 2, axis=-1))

    def space(self, x):
        return ramp((self._r(x) - self.r_in) / (self.r_out - self.r_in))

    def space_grad(self, x):
        c = np.asarray(self.center, dtype=float)
        r = self._r(x)
        w = self.r_out - self.r_in
        d = ramp_slope((r - self.r_in) / w) / w
        unit = (x - c) / np.where(r > 0, r, 1.0)[..., None]
        return d[..., None] * unit

    def time(self, t):
        if self.t_in is None:
            return np.ones_like(np.asarray(t, dtype=float))
        return ramp((np.abs(np.asarray(t) - self.t_center) - self.t_in) / (self.t_out - self.t_in))

    def values(self, grid: UniformGrid, times=None):
        """``zeta`` on the grid, with a leading time axis when ``times`` is given."""
        zs = self.space(grid.coords())
        if times is None:
            return zs
        return self.time(times).reshape((-1,) + (1,) * grid.n) * zs[None]

    def max_grad(self, grid: UniformGrid):
        return float(np.max(np.linalg.norm(self.space_grad(grid.coords()), axis=-1)))


def make_cutoff_sequence(ball: Ball, k_max: int, q: float, grid: UniformGrid | None = None):
    """Cutoffs for the balls ``B_k = (1 + 2^-k) B``.

    ``zeta_k`` is 1 on ``B_{k+1}`` and vanishes outside ``B_k``, so
    ``zeta_k = 1`` on the support of ``zeta_{k+1}`` and
    ``|grad zeta_k| <= 3.75 * 2^k / R``.
    """
    if k_max < 1:
        raise ConfigError("k_max must be at least 1")
    R = ball.radius
    if grid is not None:
        if not ball.scaled(2.0).inside(grid):
            raise ResolutionError("2B is not inside the grid")
        if R < 2 * grid.h:
            raise ResolutionError("ball radius below two grid spacings")
    return [Cutoff(ball.center, R * (1 + 2.0 ** (-k - 1)), R * (1 + 2.0 ** (-k)), q)
            for k in range(k_max + 1)]


def make_cylinder_cutoffs(cyl: Cylinder, k_max: int, q: float):
    """Cutoffs for ``Q_k = 2(1 + 2^-k) Q``: 1 on ``Q_{k+1}``, 0 outside ``Q_k``."""
    if k_max < 1:
        raise ConfigError("k_max must be at least 1")
    out = []
    for k in range(k_max + 1):
        a, b = 2 * (1 + 2.0 ** (-k - 1)), 2 * (1 + 2.0 ** (-k))
        out.append(Cutoff(cyl.center, cyl.radius * a, cyl.radius * b, q,
                          cyl.t_center, cyl.t_half * a, cyl.t_half * b))
    return out


# -- serialization ---------------------------------------------------------------

_MAGIC = b"PHLF"


def atomic_write(path, data: bytes | str):
    """Write through a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _pack(field_obj):
    g = field_obj.grid
    st = isinstance(field_obj, SpaceTimeField)
    vals = field_obj.values
    m = vals.shape[-1]
    frames = vals.shape[0] if st else 0
    tau = field_obj.tau if st else 0.0
    t0 = field_obj.t0 if st else 0.0
    head = struct.pack("<q", g.n) + struct.pack(f"<{g.n}q", *g.shape)
    head += struct.pack("<d", g.h) + struct.pack("<q", m)
    head += struct.pack(f"<{g.n}d", *g.origin)
    head += struct.pack("<q", frames) + struct.pack("<dd", tau, t0)
    return _MAGIC + head + np.ascontiguousarray(vals, dtype="<f8").tobytes()


def save_field(path, field_obj):
    """Binary layout (little endian, 64-bit): magic, n, extents, h, m,
    origin, frames (0 for a static field), tau, t0, then the row-major
    float64 payload."""
    atomic_write(path, _pack(field_obj))


def load_field(path):
    buf = Path(path).read_bytes()
    if buf[:4] != _MAGIC:
        raise ConfigError(f"{path}: not a field file")
    off = 4
    (n,) = struct.unpack_from("<q", buf, off); off += 8
    shape = struct.unpack_from(f"<{n}q", buf, off); off += 8 * n
    (h,) = struct.unpack_from("<d", buf, off); off += 8
    (m,) = struct.unpack_from("<q", buf, off); off += 8
    origin = struct.unpack_from(f"<{n}d", buf, off); off += 8 * n
    (frames,) = struct.unpack_from("<q", buf, off); off += 8
    tau, t0 = struct.unpack_from("<dd", buf, off); off += 16
    grid = UniformGrid(shape, h, origin)
    data = np.frombuffer(buf, dtype="<f8", offset=off).astype(float)
    if frames:
        return SpaceTimeField(grid, tau, data.reshape((frames,) + tuple(shape) + (m,)), t0)
    return VectorField(grid, data.reshape(tuple(shape) + (m,)))


def save_csv(path, u: VectorField):
    """One row per node: coordinates then components, with a header row."""
    g = u.grid
    x = g.coords().reshape(-1, g.n)
    vals = u.values.reshape(-1, u.m)
    names = [f"x{i + 1}" for i in range(g.n)] + [f"u{j + 1}" for j in range(u.m)]
    out = io.StringIO()
    out.write(f"# grid shape={'x'.join(map(str, g.shape))} h={g.h!r} "
              f"origin={','.join(repr(o) for o in g.origin)}\n")
    out.write(",".join(names) + "\n")
    for row in np.hstack([x, vals]):
        out.write(",".join(repr(float(v)) for v in row) + "\n")
    atomic_write(path, out.getvalue())


def load_csv(path):
    lines = Path(path).read_text().splitlines()
    meta = dict(kv.split("=", 1) for kv in lines[0].lstrip("# ").split()[1:])
    shape = tuple(int(s) for s in meta["shape"].split("x"))
    origin = tuple(float(s) for s in meta["origin"].split(","))
    grid = UniformGrid(shape, float(meta["h"]), origin)
    data = np.loadtxt(lines[2:], delimiter=",", ndmin=2)
    return VectorField(grid, data[:, grid.n:].reshape(shape + (-1,)))
