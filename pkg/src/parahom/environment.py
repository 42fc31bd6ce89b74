"""Random space-time coefficient fields a(y, s) and their sampling.

Every sample is a pure function of (spec, seed): cell values come from a
counter-based hash of (seed, integer cell coordinates), so evaluating the same
point twice, in any order or from any thread, gives the same number.
Stationarity comes from a uniform random offset of the cell lattice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

ENV_KINDS = ("constant", "periodic", "checkerboard_iid", "checkerboard_mollified")

_U64 = np.uint64
_GOLDEN = _U64(0x9E3779B97F4A7C15)
_M1 = _U64(0xBF58476D1CE4E5B9)
_M2 = _U64(0x94D049BB133111EB)
_OFFSET_TAG = 0x5EED0FF5E7


def _mix(z):
    # splitmix64 finaliser, vectorised; uint64 arithmetic wraps
    z = (z + _GOLDEN).astype(_U64)
    z = ((z ^ (z >> _U64(30))) * _M1).astype(_U64)
    z = ((z ^ (z >> _U64(27))) * _M2).astype(_U64)
    return z ^ (z >> _U64(31))


def hash_uniform(seed: int, *coords) -> np.ndarray:
    """Uniform [0,1) numbers keyed by (seed, integer coords), broadcast over coords."""
    with np.errstate(over="ignore"):
        h = _mix(np.asarray([seed & 0xFFFFFFFFFFFFFFFF], dtype=_U64))
        shape = np.broadcast_shapes(*[np.shape(c) for c in coords]) if coords else ()
        h = np.broadcast_to(h.reshape(()) if h.ndim else h, shape).astype(_U64)
        for c in coords:
            ci = np.asarray(c, dtype=np.int64).astype(_U64)
            h = _mix(h ^ ci)
    return (h >> _U64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def child_seeds(seed: int, n: int) -> list:
    """n independent 63-bit seeds derived from a master seed."""
    ss = np.random.SeedSequence(int(seed))
    return [int(c.generate_state(1, np.uint64)[0] >> np.uint64(1)) for c in ss.spawn(n)]


@dataclass(frozen=True)
class EnvSpec:
    """Law of the coefficient field.

    constant: a == value. periodic: a = table[ks mod p_t, ky mod p_x(, ...)]
    with ky = floor(y / cell_x), ks = floor(s / cell_t). checkerboard_iid:
    i.i.d. values ``high`` w.p. p else ``low`` on cells cell_x^d x cell_t.
    checkerboard_mollified: the iid field averaged over the box of half-width
    ``smoothing * cell`` in every coordinate, which is Lipschitz.
    """

    kind: str
    d: int = 1
    value: float = 1.0
    table: Optional[tuple] = None
    low: float = 1.0
    high: float = 2.0
    p: float = 0.5
    cell_x: float = 1.0
    cell_t: float = 1.0
    smoothing: float = 0.25

    def __post_init__(self):
        if self.kind not in ENV_KINDS:
            raise ValueError(f"unknown environment kind {self.kind!r}")
        if self.d not in (1, 2):
            raise ValueError("d must be 1 or 2")
        if not (self.cell_x > 0 and self.cell_t > 0):
            raise ValueError("cell sizes must be positive")
        if self.kind == "constant" and not self.value > 0:
            raise ValueError("constant environment needs a positive value")
        if self.kind == "periodic":
            if self.table is None:
                raise ValueError("periodic environment needs a table")
            tab = np.asarray(self.table, dtype=float)
            if tab.ndim != self.d + 1:
                raise ValueError(f"table must have {self.d + 1} axes (time first)")
            if not np.all(tab > 0):
                raise ValueError("table values must be positive")
            object.__setattr__(self, "table", _freeze(tab))
        if self.kind.startswith("checkerboard"):
            if not (0 < self.low <= self.high):
                raise ValueError("need 0 < low <= high")
            if not 0 <= self.p <= 1:
                raise ValueError("p must lie in [0,1]")
        if self.kind == "checkerboard_mollified" and not 0 < self.smoothing <= 0.5:
            raise ValueError("smoothing must lie in (0, 0.5]")

    @classmethod
    def constant(cls, value: float, d: int = 1) -> "EnvSpec":
        return cls("constant", d=d, value=float(value))

    @classmethod
    def periodic(cls, table, cell_x: float = 1.0, cell_t: float = 1.0, d: Optional[int] = None) -> "EnvSpec":
        tab = np.asarray(table, dtype=float)
        return cls("periodic", d=d or tab.ndim - 1, table=_freeze(tab), cell_x=cell_x, cell_t=cell_t)

    @classmethod
    def checkerboard(cls, low, high, p=0.5, cell_x=1.0, cell_t=1.0, d=1, smoothing=None) -> "EnvSpec":
        if smoothing is None:
            return cls("checkerboard_iid", d=d, low=low, high=high, p=p, cell_x=cell_x, cell_t=cell_t)
        return cls("checkerboard_mollified", d=d, low=low, high=high, p=p, cell_x=cell_x, cell_t=cell_t,
                   smoothing=smoothing)

    @property
    def table_array(self) -> np.ndarray:
        return np.asarray(self.table, dtype=float)

    def value_range(self) -> tuple:
        if self.kind == "constant":
            return (self.value, self.value)
        if self.kind == "periodic":
            t = self.table_array
            return (float(t.min()), float(t.max()))
        lo = self.high if self.p == 1 else self.low
        hi = self.low if self.p == 0 else self.high
        return (lo, hi)

    def mean(self) -> float:
        if self.kind == "constant":
            return self.value
        if self.kind == "periodic":
            return float(self.table_array.mean())
        return self.p * self.high + (1 - self.p) * self.low

    @property
    def has_cells(self) -> bool:
        return self.kind != "constant"

    @property
    def period(self) -> Optional[tuple]:
        """(time period, space period) for periodic fields."""
        if self.kind != "periodic":
            return None
        t = self.table_array
        return (t.shape[0] * self.cell_t, tuple(n * self.cell_x for n in t.shape[1:]))

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "d": self.d}
        if self.kind == "constant":
            out["value"] = self.value
        elif self.kind == "periodic":
            out.update(table=self.table_array.tolist(), cell_x=self.cell_x, cell_t=self.cell_t)
        else:
            out.update(low=self.low, high=self.high, p=self.p, cell_x=self.cell_x, cell_t=self.cell_t)
            if self.kind == "checkerboard_mollified":
                out["smoothing"] = self.smoothing
        return out


def _freeze(a: np.ndarray):
    if a.ndim == 1:
        return tuple(float(v) for v in a)
    return tuple(_freeze(r) for r in a)


def _axis_weights(z, rho):
    """Overlap of [z - rho, z + rho] with unit cells k-1, k, k+1 (k = floor z), normalised."""
    k = np.floor(z)
    f = z - k
    w_lo = np.clip(rho - f, 0.0, None) / (2 * rho)
    w_hi = np.clip(f + rho - 1.0, 0.0, None) / (2 * rho)
    return k.astype(np.int64), (w_lo, 1.0 - w_lo - w_hi, w_hi)


@dataclass(frozen=True)
class EnvSample:
    """One realisation a(., ., omega).

    ``shift`` (d space entries then time) implements translation:
    translate(env, v).eval(p) == env.eval(p + v).
    """

    spec: EnvSpec
    seed: int
    offset: tuple = field(default=None)
    shift: tuple = field(default=None)

    def __post_init__(self):
        d = self.spec.d
        if self.offset is None:
            object.__setattr__(self, "offset", self._draw_offset())
        if self.shift is None:
            object.__setattr__(self, "shift", (0.0,) * (d + 1))
        if len(self.shift) != d + 1 or len(self.offset) != d + 1:
            raise ValueError("offset/shift need d+1 entries (space..., time)")

    def _draw_offset(self) -> tuple:
        d = self.spec.d
        if self.spec.kind == "constant":
            return (0.0,) * (d + 1)
        u = hash_uniform(self.seed ^ _OFFSET_TAG, np.arange(d + 1))
        if self.spec.kind == "periodic":
            per_t, per_x = self.spec.period
            scale = list(per_x) + [per_t]
        else:
            scale = [self.spec.cell_x] * d + [self.spec.cell_t]
        return tuple(float(a * b) for a, b in zip(u, scale))

    @property
    def d(self) -> int:
        return self.spec.d

    def _cell_coords(self, X, T):
        """Lattice coordinates (space..., time) in cell units, after shift and offset."""
        X = np.asarray(X, dtype=float)
        T = np.asarray(T, dtype=float)
        d = self.d
        if X.shape[-1] != d:
            raise ValueError(f"points need {d} space coordinates")
        sp = self.spec
        zs = [((X[..., i] + self.shift[i]) + self.offset[i]) / sp.cell_x for i in range(d)]
        zt = ((T + self.shift[d]) + self.offset[d]) / sp.cell_t
        return zs, zt

    def eval(self, X, T) -> np.ndarray:
        """a at points X (shape (..., d)) and times T (broadcastable to X.shape[:-1])."""
        sp = self.spec
        X = np.asarray(X, dtype=float)
        T = np.asarray(T, dtype=float)
        shape = np.broadcast_shapes(X.shape[:-1], T.shape)
        if sp.kind == "constant":
            return np.full(shape, sp.value)
        zs, zt = self._cell_coords(X, T)
        if sp.kind == "periodic":
            tab = sp.table_array
            idx = [np.floor(zt).astype(np.int64) % tab.shape[0]]
            idx += [np.floor(z).astype(np.int64) % tab.shape[1 + i] for i, z in enumerate(zs)]
            idx = np.broadcast_arrays(*idx)
            return tab[tuple(idx)]
        if sp.kind == "checkerboard_iid":
            ks = [np.floor(z).astype(np.int64) for z in zs]
            kt = np.floor(zt).astype(np.int64)
            return np.broadcast_to(self._cell_values(ks, kt), shape).copy()
        # mollified: exact box average of the iid field
        rho = sp.smoothing
        parts = [_axis_weights(z, rho) for z in zs] + [_axis_weights(zt, rho)]
        out = np.zeros(shape)
        for combo in np.ndindex(*(3,) * (self.d + 1)):
            w = 1.0
            ks = []
            for (k, ws), c in zip(parts, combo):
                w = w * ws[c]
                ks.append(k + (c - 1))
            if not np.any(w):
                continue
            out += w * self._cell_values(ks[:-1], ks[-1])
        return out

    def _cell_values(self, ks, kt):
        u = hash_uniform(self.seed, kt, *ks)
        return np.where(u < self.spec.p, self.spec.high, self.spec.low)

    def time_keys(self, T) -> Optional[np.ndarray]:
        """Integer keys with equal key => identical spatial profile, or None."""
        sp = self.spec
        T = np.asarray(T, dtype=float)
        if sp.kind == "constant":
            return np.zeros(T.shape, dtype=np.int64)
        if sp.kind == "checkerboard_mollified":
            return None
        zt = ((T + self.shift[self.d]) + self.offset[self.d]) / sp.cell_t
        k = np.floor(zt).astype(np.int64)
        if sp.kind == "periodic":
            k = k % sp.table_array.shape[0]
        return k


def sample_env(spec: EnvSpec, seed: int) -> EnvSample:
    return EnvSample(spec, int(seed))


def translate(env: EnvSample, v) -> EnvSample:
    """Space-time translation: result.eval(p) == env.eval(p + v). v = (x..., t)."""
    v = tuple(float(a) for a in np.atleast_1d(v))
    if len(v) != env.d + 1:
        raise ValueError("translation vector needs d+1 entries (space..., time)")
    return replace(env, shift=tuple(a + b for a, b in zip(env.shift, v)))


def _window_mean(env: EnvSample, center_x: float, n_quad: int) -> float:
    """Midpoint-rule mean of a over the unit parabolic cube C_1 centred (in space) at
    center_x along the first axis, with top time 0."""
    d = env.d
    q = (np.arange(n_quad) + 0.5) / n_quad
    xs = -1.0 + 2.0 * q
    ts = -1.0 + q
    grids = np.meshgrid(*([xs] * d), indexing="ij")
    X = np.stack(grids, axis=-1)
    X[..., 0] += center_x
    vals = env.eval(X[None, ...], ts.reshape((-1,) + (1,) * d))
    return float(vals.mean())


def decorrelation_estimate(spec: EnvSpec, r: float, n_samples: int, seed: int = 0, n_quad: int = 16) -> dict:
    """|Cov(f, g_r)| for f the mean of a over C_1 and g_r the same functional
    on the window shifted by r along the first space axis."""
    if n_samples < 2:
        raise ValueError("need at least two samples")
    fs = np.empty(n_samples)
    gs = np.empty(n_samples)
    for i, s in enumerate(child_seeds(seed, n_samples)):
        env = sample_env(spec, s)
        fs[i] = _window_mean(env, 0.0, n_quad)
        gs[i] = _window_mean(env, float(r), n_quad)
    cov = float(np.cov(fs, gs, ddof=1)[0, 1])
    prod = (fs - fs.mean()) * (gs - gs.mean())
    se = float(prod.std(ddof=1) / math.sqrt(n_samples))
    return {"r": float(r), "cov": cov, "abs_cov": abs(cov), "stderr": se, "n": n_samples}
