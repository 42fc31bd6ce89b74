"""Symmetric matrices, Pucci extremal operators and the operator zoo F(M, y, s).

The zoo is closed: ``pucci_plus``, ``pucci_minus``, ``linear_trace`` and
``scalar_modulated`` (a coefficient field a(y, s) times one of the first three).
An optional matrix shift realises F_M(X) = F(X + M).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

BASE_KINDS = ("pucci_plus", "pucci_minus", "linear_trace")
KINDS = BASE_KINDS + ("scalar_modulated",)
KIND_CODES = {"pucci_plus": 0, "pucci_minus": 1, "linear_trace": 2}


@dataclass(frozen=True)
class SymMatrix:
    """d x d symmetric matrix, d in {1, 2}; stores the upper triangle only."""

    d: int
    upper: tuple

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError("SymMatrix supports d = 1, 2")
        n = self.d * (self.d + 1) // 2
        up = tuple(float(v) for v in self.upper)
        if len(up) != n:
            raise ValueError(f"expected {n} upper-triangle entries, got {len(up)}")
        object.__setattr__(self, "upper", up)

    @classmethod
    def from_array(cls, a) -> "SymMatrix":
        a = np.atleast_2d(np.asarray(a, dtype=float))
        if a.shape == (1, 1):
            return cls(1, (a[0, 0],))
        if a.shape != (2, 2) or abs(a[0, 1] - a[1, 0]) > 1e-12 * (1 + abs(a[0, 1])):
            raise ValueError("expected a symmetric 1x1 or 2x2 matrix")
        return cls(2, (a[0, 0], a[0, 1], a[1, 1]))

    @classmethod
    def scalar(cls, m: float) -> "SymMatrix":
        return cls(1, (m,))

    @classmethod
    def identity(cls, d: int, scale: float = 1.0) -> "SymMatrix":
        return cls(1, (scale,)) if d == 1 else cls(2, (scale, 0.0, scale))

    @classmethod
    def zero(cls, d: int) -> "SymMatrix":
        return cls.identity(d, 0.0)

    @classmethod
    def diag(cls, *entries) -> "SymMatrix":
        if len(entries) == 1:
            return cls(1, entries)
        return cls(2, (entries[0], 0.0, entries[1]))

    def to_array(self) -> np.ndarray:
        if self.d == 1:
            return np.array([[self.upper[0]]])
        a, b, c = self.upper
        return np.array([[a, b], [b, c]])

    def eigenvalues(self) -> tuple:
        if self.d == 1:
            return (self.upper[0],)
        a, b, c = self.upper
        mean = 0.5 * (a + c)
        rad = math.hypot(0.5 * (a - c), b)
        return (mean - rad, mean + rad)

    def __add__(self, other: "SymMatrix") -> "SymMatrix":
        if other.d != self.d:
            raise ValueError("dimension mismatch")
        return SymMatrix(self.d, tuple(x + y for x, y in zip(self.upper, other.upper)))

    def __neg__(self) -> "SymMatrix":
        return SymMatrix(self.d, tuple(-x for x in self.upper))

    def __mul__(self, s: float) -> "SymMatrix":
        return SymMatrix(self.d, tuple(s * x for x in self.upper))

    __rmul__ = __mul__

    def norm(self) -> float:
        """Largest absolute eigenvalue."""
        return max(abs(e) for e in self.eigenvalues())

    def directional(self) -> np.ndarray:
        """Second derivatives of x.Mx/2 along the stencil directions.

        d=1: the entry itself; d=2: axes e1, e2 and the unit diagonals.
        """
        if self.d == 1:
            return np.array([self.upper[0]])
        a, b, c = self.upper
        return np.array([a, c, 0.5 * (a + c) + b, 0.5 * (a + c) - b])


def _check_constants(lam, Lam):
    if not (lam > 0 and Lam >= lam and math.isfinite(Lam)):
        raise ValueError(f"need 0 < lambda <= Lambda, got ({lam}, {Lam})")


def _as_sym(M) -> SymMatrix:
    return M if isinstance(M, SymMatrix) else SymMatrix.from_array(M)


def pucci_plus(M, lam: float, Lam: float) -> float:
    _check_constants(lam, Lam)
    ev = _as_sym(M).eigenvalues()
    return Lam * sum(e for e in ev if e > 0) + lam * sum(e for e in ev if e < 0)


def pucci_minus(M, lam: float, Lam: float) -> float:
    _check_constants(lam, Lam)
    ev = _as_sym(M).eigenvalues()
    return lam * sum(e for e in ev if e > 0) + Lam * sum(e for e in ev if e < 0)


def base_value(kind: str, M: SymMatrix, lam: float, Lam: float) -> float:
    if kind == "pucci_plus":
        return pucci_plus(M, lam, Lam)
    if kind == "pucci_minus":
        return pucci_minus(M, lam, Lam)
    if kind == "linear_trace":
        return float(sum(M.eigenvalues()))
    raise ValueError(f"unknown base kind {kind!r}")


def _phi(kind: str, e, lam, Lam):
    e = np.asarray(e, dtype=float)
    if kind == "pucci_plus":
        return np.where(e > 0, Lam * e, lam * e)
    if kind == "pucci_minus":
        return np.where(e > 0, lam * e, Lam * e)
    return e


def base_from_directional(kind: str, dirs: np.ndarray, lam: float, Lam: float) -> np.ndarray:
    """Discrete operator from directional second differences (last axis).

    d=1 (one direction): exact. d=2 (four directions, axes then diagonals):
    linear_trace uses the axes; the Pucci kinds apply the extremal weight to the
    largest and smallest directional value, a monotone wide-stencil surrogate
    for the eigenvalue sums.
    """
    dirs = np.asarray(dirs, dtype=float)
    if dirs.shape[-1] == 1:
        return _phi(kind, dirs[..., 0], lam, Lam)
    if kind == "linear_trace":
        return dirs[..., 0] + dirs[..., 1]
    hi = dirs.max(axis=-1)
    lo = dirs.min(axis=-1)
    return _phi(kind, hi, lam, Lam) + _phi(kind, lo, lam, Lam)


@dataclass(frozen=True)
class OperatorSpec:
    """F(X, y, s) = a(y, s) * base(X + shift) for modulated kinds, base(X + shift) otherwise.

    ``lam``/``Lam`` are the Pucci constants; linear_trace ignores them (its
    per-eigenvalue constants are 1).
    """

    kind: str
    lam: float = 1.0
    Lam: float = 1.0
    base: Optional[str] = None
    shift: Optional[SymMatrix] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.kind == "scalar_modulated":
            if self.base not in BASE_KINDS:
                raise ValueError("scalar_modulated needs base in " + ", ".join(BASE_KINDS))
        elif self.base is not None:
            raise ValueError("base is only meaningful for scalar_modulated")
        _check_constants(self.lam, self.Lam)

    @property
    def base_kind(self) -> str:
        return self.base if self.kind == "scalar_modulated" else self.kind

    @property
    def modulated(self) -> bool:
        return self.kind == "scalar_modulated"

    @property
    def code(self) -> int:
        return KIND_CODES[self.base_kind]

    def with_shift(self, M: Optional[SymMatrix]) -> "OperatorSpec":
        """F_M: adds M to any existing shift."""
        if M is None:
            return self
        new = M if self.shift is None else self.shift + M
        return replace(self, shift=new)

    def scaled(self, c: float) -> "OperatorSpec":
        """c * F for c > 0 (Pucci constants scale; linear_trace is wrapped by modulation)."""
        if self.base_kind == "linear_trace":
            raise ValueError("linear_trace has fixed constants; scale the coefficient field instead")
        return replace(self, lam=self.lam * c, Lam=self.Lam * c)

    def coef_range(self, env_spec=None) -> tuple:
        if not self.modulated:
            return (1.0, 1.0)
        if env_spec is None:
            raise ValueError("modulated operator needs an environment")
        return env_spec.value_range()

    def eigen_constants(self, env_spec=None) -> tuple:
        """Per-eigenvalue constants (lower, upper) including the modulation range."""
        lo, hi = self.coef_range(env_spec)
        if self.base_kind == "linear_trace":
            return (lo, hi)
        return (self.lam * lo, self.Lam * hi)

    def ellipticity_bounds(self, d: int, env_spec=None) -> tuple:
        """(lower, upper) with lower*|N| <= F(M+N) - F(M) <= upper*|N| for N >= 0,
        |N| the largest eigenvalue."""
        lo, hi = self.eigen_constants(env_spec)
        return (lo, d * hi)

    def base_at(self, M: SymMatrix) -> float:
        """Exact base(M + shift)."""
        total = M if self.shift is None else M + self.shift
        return base_value(self.base_kind, total, self.lam, self.Lam)

    def base_at_zero_discrete(self, d: int) -> float:
        """base_h(shift): the stencil operator applied to the shift alone."""
        shift = self.shift if self.shift is not None else SymMatrix.zero(d)
        return float(base_from_directional(self.base_kind, shift.directional(), self.lam, self.Lam))

    def shift_directional(self, d: int) -> np.ndarray:
        shift = self.shift if self.shift is not None else SymMatrix.zero(d)
        if shift.d != d:
            raise ValueError("shift dimension does not match grid")
        return shift.directional()


def eval_F(spec: OperatorSpec, M, p, env=None) -> float:
    """F(M + shift, p) with p a SpaceTimePoint (y, s) in environment units."""
    M = _as_sym(M)
    val = spec.base_at(M)
    if spec.modulated:
        if env is None:
            raise ValueError("modulated operator evaluated without an environment")
        a = float(env.eval(np.asarray(p.x, dtype=float)[None, :], np.array([p.t]))[0])
        return a * val
    return val


def _random_sym(rng, d, scale=2.0) -> SymMatrix:
    a = rng.normal(scale=scale, size=(d, d))
    return SymMatrix.from_array(0.5 * (a + a.T))


def _random_psd(rng, d) -> SymMatrix:
    b = rng.normal(size=(d, d))
    n = b @ b.T
    # occasionally rank-deficient or large
    n *= rng.choice([0.01, 1.0, 100.0])
    if d == 2 and rng.random() < 0.3:
        v = rng.normal(size=2)
        n = np.outer(v, v)
    return SymMatrix.from_array(n)


def check_uniform_ellipticity(
    spec,
    samples: int,
    seed: int = 0,
    env=None,
    d: int = 1,
    bounds: Optional[tuple] = None,
    rtol: float = 1e-10,
) -> dict:
    """Sample (M, N >= 0, p) and check the ratio (F(M+N) - F(M)) / |N|.

    ``spec`` is an OperatorSpec or a callable ``F(M: SymMatrix, p) -> float``;
    callables need explicit ``bounds``.
    """
    if samples <= 0:
        raise ValueError("samples must be positive")
    from .grid import SpaceTimePoint

    if isinstance(spec, OperatorSpec):
        F: Callable = lambda M, p: eval_F(spec, M, p, env)
        if bounds is None:
            bounds = spec.ellipticity_bounds(d, env.spec if env is not None else None)
    else:
        F = spec
        if bounds is None:
            raise ValueError("callable operators need explicit bounds")
    rng = np.random.default_rng(seed)
    lo_b, hi_b = bounds
    ratios = []
    scale = []
    for _ in range(samples):
        M = _random_sym(rng, d)
        N = _random_psd(rng, d)
        nrm = max(N.eigenvalues())
        if nrm <= 1e-14:
            continue
        p = SpaceTimePoint(tuple(rng.uniform(-10, 10, size=d)), rng.uniform(-10, 10))
        f1, f0 = F(M + N, p), F(M, p)
        ratios.append((f1 - f0) / nrm)
        # rounding allowance relative to the size of the two evaluations
        scale.append((abs(f1) + abs(f0)) / nrm)
    ratios = np.array(ratios)
    slack = rtol * (1.0 + np.array(scale))
    mn, mx = float(ratios.min()), float(ratios.max())
    ok = bool(np.all(ratios >= lo_b - slack) and np.all(ratios <= hi_b + slack))
    return {"min_ratio": mn, "max_ratio": mx, "pass": ok, "bounds": (lo_b, hi_b), "samples": int(ratios.size)}
