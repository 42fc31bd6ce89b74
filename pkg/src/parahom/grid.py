"""Parabolic space-time geometry: points, cylinders/cubes, node grids and norms.

Grids are node-centred and uniform. Arrays holding space-time data are laid
out time-first, ``values[n, i]`` in d=1 and ``values[n, i, j]`` in d=2. The top
time slice belongs to the interior; the parabolic boundary is the bottom slice
together with the lateral sides.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

KINDS = ("cylinder", "cube", "forward")


@dataclass(frozen=True)
class SpaceTimePoint:
    x: tuple
    t: float

    def __post_init__(self):
        x = tuple(float(v) for v in np.atleast_1d(self.x))
        if len(x) < 1:
            raise ValueError("point needs at least one space coordinate")
        if not all(math.isfinite(v) for v in x) or not math.isfinite(self.t):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", float(self.t))

    @property
    def d(self) -> int:
        return len(self.x)

    def __add__(self, other: "SpaceTimePoint") -> "SpaceTimePoint":
        if other.d != self.d:
            raise ValueError("dimension mismatch")
        return SpaceTimePoint(tuple(a + b for a, b in zip(self.x, other.x)), self.t + other.t)


def parabolic_distance(p1: SpaceTimePoint, p2: SpaceTimePoint) -> float:
    """(|x1-x2|^2 + |t1-t2|)^(1/2)."""
    if p1.d != p2.d:
        raise ValueError(f"dimension mismatch: {p1.d} vs {p2.d}")
    dx2 = sum((a - b) ** 2 for a, b in zip(p1.x, p2.x))
    return math.sqrt(dx2 + abs(p1.t - p2.t))


@dataclass(frozen=True)
class ParabolicDomain:
    """Cylinder/cube of radius r and duration r^2 (or ``height`` when given,
    which turns a cube into a general space-time box)."""

    kind: str
    center: SpaceTimePoint
    r: float
    height: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if not (self.r > 0 and math.isfinite(self.r)):
            raise ValueError(f"radius must be positive, got {self.r}")
        if self.height is not None and not (self.height > 0 and math.isfinite(self.height)):
            raise ValueError(f"height must be positive, got {self.height}")

    @property
    def duration(self) -> float:
        return self.r**2 if self.height is None else float(self.height)

    @property
    def d(self) -> int:
        return self.center.d

    @property
    def time_extent(self) -> tuple:
        """Half-open interval (t0, t1]."""
        t = self.center.t
        if self.kind == "forward":
            return (t, t + self.duration)
        return (t - self.duration, t)

    @property
    def space_box(self) -> list:
        return [(c - self.r, c + self.r) for c in self.center.x]

    def volume(self) -> float:
        if self.kind == "cube" or self.d == 1:
            return (2 * self.r) ** self.d * self.duration
        # d=2 ball
        return math.pi * self.r**2 * self.duration

    def contains(self, p: SpaceTimePoint) -> bool:
        t0, t1 = self.time_extent
        if not (t0 < p.t <= t1):
            return False
        dx = np.subtract(p.x, self.center.x)
        if self.kind == "cube":
            return bool(np.all(np.abs(dx) < self.r))
        return float(np.sqrt(np.sum(dx**2))) < self.r


def make_domain(kind: str, center: SpaceTimePoint, r: float) -> ParabolicDomain:
    return ParabolicDomain(kind, center, float(r))


def box(lower: Sequence[float], side: float, t0: float, height: float) -> ParabolicDomain:
    """[lower, lower + side]^d x (t0, t0 + height]."""
    r = 0.5 * side
    c = tuple(float(a) + r for a in lower)
    return ParabolicDomain("cube", SpaceTimePoint(c, t0 + height), r, float(height))


def cube(r: float, d: int = 1, top: float = 0.0, x0: Optional[Sequence[float]] = None) -> ParabolicDomain:
    """C_r(x0, top) -- shorthand used all over the experiments."""
    x0 = tuple(x0) if x0 is not None else (0.0,) * d
    return ParabolicDomain("cube", SpaceTimePoint(x0, top), float(r))


def _as_count(length: float, step: float, what: str) -> int:
    n = length / step
    k = int(round(n))
    if k < 1 or abs(n - k) > 1e-9 * max(1.0, n):
        raise ValueError(f"{what}: extent {length} is not an integer multiple of the step {step}")
    return k


@dataclass(frozen=True)
class GridSpec:
    """Uniform node grid on the closure of a parabolic domain."""

    domain: ParabolicDomain
    h: float
    dt: float
    n_space: int = field(init=False)
    n_time: int = field(init=False)

    def __post_init__(self):
        if self.domain.d not in (1, 2):
            raise ValueError("only d = 1 and d = 2 are supported")
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "n_space", _as_count(2 * self.domain.r, self.h, "h"))
        object.__setattr__(self, "n_time", _as_count(self.domain.duration, self.dt, "dt"))

    @classmethod
    def build(cls, domain: ParabolicDomain, h: float, dt_max: float, time_align: int = 1) -> "GridSpec":
        """Grid with the largest dt <= dt_max that divides the time extent
        into a multiple of ``time_align`` steps."""
        T = domain.duration
        n = max(1, math.ceil(T / dt_max - 1e-12))
        n = time_align * math.ceil(n / time_align)
        return cls(domain, h, T / n)

    @property
    def d(self) -> int:
        return self.domain.d

    @property
    def space_shape(self) -> tuple:
        return (self.n_space + 1,) * self.d

    @property
    def shape(self) -> tuple:
        return (self.n_time + 1,) + self.space_shape

    def axes(self) -> list:
        return [np.linspace(lo, hi, self.n_space + 1) for lo, hi in self.domain.space_box]

    def times(self) -> np.ndarray:
        t0, t1 = self.domain.time_extent
        return t0 + self.dt * np.arange(self.n_time + 1)

    def coords(self) -> np.ndarray:
        """Spatial node coordinates, shape space_shape + (d,)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1)

    def lateral_mask(self) -> np.ndarray:
        """Spatial nodes on (or, for the d=2 cylinder, outside) the lateral boundary."""
        shape = self.space_shape
        mask = np.zeros(shape, dtype=bool)
        if self.domain.kind == "cube" or self.d == 1:
            for ax in range(self.d):
                idx = [slice(None)] * self.d
                idx[ax] = 0
                mask[tuple(idx)] = True
                idx[ax] = -1
                mask[tuple(idx)] = True
            return mask
        X = self.coords() - np.asarray(self.domain.center.x)
        rad = np.sqrt(np.sum(X**2, axis=-1))
        return rad >= self.domain.r - 0.5 * self.h

    def inside_mask(self) -> np.ndarray:
        """Spatial nodes in the closed domain (all nodes, except outside the d=2 ball)."""
        if self.domain.kind == "cube" or self.d == 1:
            return np.ones(self.space_shape, dtype=bool)
        X = self.coords() - np.asarray(self.domain.center.x)
        rad = np.sqrt(np.sum(X**2, axis=-1))
        return rad <= self.domain.r + 0.5 * self.h

    def boundary_mask(self) -> np.ndarray:
        mask = np.broadcast_to(self.lateral_mask(), self.shape).copy()
        mask[0] = True
        return mask

    def space_weights(self) -> np.ndarray:
        """Trapezoid quadrature weights for the spatial nodes (zero outside the ball)."""
        w1 = np.full(self.n_space + 1, self.h)
        w1[0] = w1[-1] = 0.5 * self.h
        w = w1
        for _ in range(self.d - 1):
            w = np.multiply.outer(w, w1)
        return np.where(self.inside_mask(), w, 0.0)

    def cell_volume(self) -> float:
        return self.h**self.d * self.dt

    def measure(self) -> float:
        """Discrete volume: sum of node weights over time levels 1..n_time."""
        return float(self.space_weights().sum()) * self.dt * self.n_time


@dataclass
class SpaceTimeField:
    """Grid function on a GridSpec.

    ``levels`` lists the time indices actually stored (long marches keep a
    subsample); ``values[k]`` is the field at time index ``levels[k]``.
    """

    spec: GridSpec
    values: np.ndarray
    levels: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.levels is None:
            self.levels = np.arange(self.spec.n_time + 1)
        self.levels = np.asarray(self.levels, dtype=np.int64)
        if self.values.shape != (len(self.levels),) + self.spec.space_shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field has non-finite values")

    @property
    def boundary_mask(self) -> np.ndarray:
        lat = self.spec.lateral_mask()
        mask = np.broadcast_to(lat, self.values.shape).copy()
        mask[self.levels == 0] = True
        return mask

    @property
    def times(self) -> np.ndarray:
        return self.spec.times()[self.levels]

    def final(self) -> np.ndarray:
        return self.values[-1]

    def points(self):
        """(coords, times) arrays broadcast over the stored values."""
        X = self.spec.coords()
        T = self.times
        return X, T


def sup_norm(f: SpaceTimeField) -> float:
    if f.values.size == 0:
        raise ValueError("empty field")
    return float(np.max(np.abs(f.values)))


def _pair_quotients(vals, xs, ts, alpha, i, j):
    dx2 = np.sum((xs[i] - xs[j]) ** 2, axis=-1)
    dist = np.sqrt(dx2 + np.abs(ts[i] - ts[j]))
    ok = dist > 0
    return np.abs(vals[i] - vals[j])[ok] / dist[ok] ** alpha


def holder_seminorm(f: SpaceTimeField, alpha: float, max_pairs: Optional[int] = None, seed: int = 0) -> float:
    """sup |f(p)-f(q)| / d(p,q)^alpha over distinct stored nodes.

    With ``max_pairs`` set and the full pair count larger, a seed-deterministic
    random subset of pairs is used instead.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0,1), got {alpha}")
    X, T = f.points()
    d = f.spec.d
    n_lev = len(T)
    n_sp = int(np.prod(f.spec.space_shape))
    xs = np.broadcast_to(X.reshape(1, n_sp, d), (n_lev, n_sp, d)).reshape(-1, d)
    ts = np.repeat(T, n_sp)
    vals = f.values.reshape(-1)
    n = vals.size
    total = n * (n - 1) // 2
    best = 0.0
    if max_pairs is None or total <= max_pairs:
        for i0 in range(n - 1):
            j = np.arange(i0 + 1, n)
            q = _pair_quotients(vals, xs, ts, alpha, np.full(j.size, i0), j)
            if q.size:
                best = max(best, float(q.max()))
        return best
    rng = np.random.default_rng(seed)
    i = rng.integers(0, n, size=max_pairs)
    j = rng.integers(0, n, size=max_pairs)
    q = _pair_quotients(vals, xs, ts, alpha, i, j)
    return float(q.max()) if q.size else 0.0
