"""Subadditive processes on nested lattice cubes, ergodic averages, the greedy
Vitali-type selection and the maximal inequality.

Cubes are integer boxes u + [0, n_1) x ... x [0, n_D). For space-time cubes
the last coordinate is time, so a parabolic cube of side n in d space
dimensions is [0, n)^d x [0, n^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .environment import EnvSpec, child_seeds, sample_env
from .errors import ConfigurationError, InvariantViolation
from .grid import box
from .operators import OperatorSpec, SymMatrix
from .parallel import ensemble_map

SEQ_KINDS = ("standard", "parabolic", "custom")


@dataclass
class CubeSequence:
    dimension: int
    sides: list
    kind: str = "custom"

    def __post_init__(self):
        if self.kind not in SEQ_KINDS:
            raise ConfigurationError("kind", f"unknown cube sequence kind {self.kind!r}")
        self.sides = [tuple(int(v) for v in s) for s in self.sides]
        if not self.sides:
            raise ConfigurationError("sides", "need at least one stage")
        for s in self.sides:
            if len(s) != self.dimension or min(s) < 1:
                raise ConfigurationError("sides", f"bad side vector {s}")
        for a, b in zip(self.sides[:-1], self.sides[1:]):
            if not all(y > x for x, y in zip(a, b)):
                raise ConfigurationError("sides", "sides must increase strictly in every coordinate")

    @classmethod
    def standard(cls, dimension: int, ns: Sequence[int]) -> "CubeSequence":
        return cls(dimension, [(n,) * dimension for n in ns], "standard")

    @classmethod
    def parabolic(cls, d: int, ns: Sequence[int]) -> "CubeSequence":
        return cls(d + 1, [(n,) * d + (n * n,) for n in ns], "parabolic")

    def volumes(self) -> list:
        return [int(np.prod(s)) for s in self.sides]


@dataclass
class SubadditiveProcess:
    """R(origin, sides, env) -> float with 0 <= R <= C |I|."""

    evaluator: Callable
    C: float
    stationary_expected: bool = True
    subadditive_expected: bool = True
    slack: float = 1e-9
    name: str = "process"

    def __call__(self, origin, sides, env) -> float:
        val = float(self.evaluator(tuple(origin), tuple(sides), env))
        vol = float(np.prod(sides))
        if not (-self.slack <= val <= self.C * vol + self.slack * max(1.0, vol)):
            raise InvariantViolation(f"{self.name}: R = {val} outside [0, {self.C} * {vol}]")
        return val


def volume_process() -> SubadditiveProcess:
    return SubadditiveProcess(lambda o, s, env: float(np.prod(s)), 1.0, name="volume")


def cell_sum_process(env_spec: EnvSpec) -> SubadditiveProcess:
    """Additive process: sum of the coefficient at the centres of the unit cells of I.

    Needs unit cells, so that distinct lattice cells carry independent values.
    """
    if env_spec.kind != "checkerboard_iid" or env_spec.cell_x != 1 or env_spec.cell_t != 1:
        raise ConfigurationError("environment", "cell_sum needs a unit-cell checkerboard_iid field")
    d = env_spec.d

    def ev(origin, sides, env):
        if len(sides) != d + 1:
            raise ConfigurationError("dimension", "cube dimension must be d + 1")
        axes = [o + 0.5 + np.arange(n) for o, n in zip(origin, sides)]
        grids = np.meshgrid(*axes, indexing="ij")
        X = np.stack(grids[:d], axis=-1)
        return float(env.eval(X, grids[d]).sum())

    return SubadditiveProcess(ev, env_spec.high, subadditive_expected=True, name="cell_sum")


def contact_measure_process(op: OperatorSpec, M: SymMatrix, ell: float, side: str = "above",
                            nodes_per_cell: int = 8, tol_factor: float = 0.0) -> SubadditiveProcess:
    """R(I) = measure of the contact set of the obstacle problem on I (unit oscillation scale)."""
    from .obstacle import solve_obstacle
    from .solver import make_grid

    def ev(origin, sides, env):
        d = len(sides) - 1
        n = sides[0]
        if any(s != n for s in sides[:d]):
            raise ConfigurationError("sides", "space sides must be equal")
        dom = box(origin[:d], float(n), float(origin[d]), float(sides[d]))
        grid = make_grid(op.with_shift(M), env.spec if env is not None else None, dom, eps=1.0,
                         nodes_per_cell=nodes_per_cell)
        return solve_obstacle(op, env, ell, 1.0, grid, side, M, tol_factor, save="final").contact_measure

    return SubadditiveProcess(ev, 1.0, name=f"contact_{side}")


def ergodic_average(proc: SubadditiveProcess, seq: CubeSequence, env_spec: Optional[EnvSpec], n_env: int,
                    seed: int = 0, threads: int = None) -> dict:
    """R(I_j)/|I_j| for every stage and environment, with pooled statistics."""
    if n_env < 1:
        raise ConfigurationError("n_env", "must be >= 1")
    envs = [sample_env(env_spec, s) for s in child_seeds(seed, n_env)] if env_spec is not None else [None] * n_env
    vols = np.array(seq.volumes(), dtype=float)
    origin = (0,) * seq.dimension

    def one(env):
        return [proc(origin, s, env) for s in seq.sides]

    R = np.array(ensemble_map(one, envs, threads), dtype=float)
    ratios = R / vols[None, :]
    mean = ratios.mean(axis=0)
    var = ratios.var(axis=0, ddof=1) if n_env > 1 else np.zeros_like(mean)
    stages = []
    for j, s in enumerate(seq.sides):
        stages.append({"stage": j, "sides": s, "volume": float(vols[j]), "mean": float(mean[j]),
                       "var": float(var[j]), "stderr": float(math.sqrt(var[j] / n_env))})
    if len(seq.sides) >= 2:
        drift = float(abs(mean[-1] - mean[-2]) / max(abs(mean[-1]), 1e-300))
        env_drift = np.abs(ratios[:, -1] - ratios[:, -2]) / np.maximum(np.abs(ratios[:, -1]), 1e-300)
    else:
        drift = float("nan")
        env_drift = np.full(n_env, np.nan)
    return {"stages": stages, "ratios": ratios, "pooled_drift": drift, "env_drift": env_drift,
            "variance_shrinks": bool(np.all(np.diff(var) <= 1e-15)) if n_env > 1 else None}


def maximal_inequality_check(proc: SubadditiveProcess, seq: CubeSequence, env_spec: EnvSpec, n_env: int,
                             alpha: float, seed: int = 0, n_se: float = 3.0, threads: int = None) -> dict:
    """P[sup_j R(I_j)/|I_j| > alpha] <= (3^D / alpha) E[R(I_J)/|I_J|], checked with n_se stderr slack."""
    if not alpha > 0:
        raise ConfigurationError("alpha", "must be positive")
    res = ergodic_average(proc, seq, env_spec, n_env, seed, threads)
    ratios = res["ratios"]
    exceed = (ratios.max(axis=1) > alpha).astype(float)
    p = float(exceed.mean())
    se_p = math.sqrt(max(p * (1 - p), 1.0 / n_env) / n_env)
    last = ratios[:, -1]
    c = 3.0**seq.dimension / alpha
    bound = c * float(last.mean())
    se_b = c * float(last.std(ddof=1) / math.sqrt(n_env)) if n_env > 1 else 0.0
    slack = n_se * math.hypot(se_p, se_b)
    return {"p_exceed": p, "bound": bound, "slack": slack, "pass": bool(p <= bound + slack)}


def subadditivity_spot_check(proc: SubadditiveProcess, env_spec: Optional[EnvSpec], dimension: int, n_samples: int,
                             seed: int = 0, max_side: int = 6, parabolic: bool = False) -> dict:
    """Random binary splits I = I1 u I2 along one coordinate: R(I) <= R(I1) + R(I2) + slack."""
    rng = np.random.default_rng(seed)
    envs = child_seeds(seed, n_samples)
    worst = -np.inf
    for s in envs:
        env = sample_env(env_spec, s) if env_spec is not None else None
        n = int(rng.integers(2, max_side + 1))
        sides = [n] * dimension
        if parabolic:
            sides[-1] = n * n
        origin = tuple(int(v) for v in rng.integers(-5, 6, size=dimension))
        # parabolic cubes are split in time so the space sides stay equal
        ax = dimension - 1 if parabolic else int(rng.integers(0, dimension))
        cut = int(rng.integers(1, sides[ax]))
        s1 = list(sides)
        s1[ax] = cut
        s2 = list(sides)
        s2[ax] = sides[ax] - cut
        o2 = list(origin)
        o2[ax] += cut
        excess = proc(origin, sides, env) - proc(origin, s1, env) - proc(tuple(o2), s2, env)
        worst = max(worst, excess)
    return {"max_excess": float(worst), "pass": bool(worst <= proc.slack)}


def vitali_select(points: Sequence, sides: Sequence) -> list:
    """Greedy disjoint subfamily of the cubes u + [0, n(u)).

    Repeatedly take the remaining point with the largest cube (ties: smallest
    coordinates lexicographically, then input index) and discard every
    remaining point of the dilated cube u + [-n, 2n), as well as any point
    whose cube would meet the picked one. Returns input indices in pick order.
    """
    P = np.asarray(points, dtype=np.int64)
    if P.ndim == 1:
        P = P[:, None]
    S = np.asarray(sides, dtype=np.int64)
    if S.ndim == 1:
        S = np.repeat(S[:, None], P.shape[1], axis=1) if S.shape[0] == P.shape[0] else S[None, :]
    if S.shape != P.shape:
        raise ValueError("points and sides must have matching shapes")
    if np.any(S < 1):
        raise ValueError("sides must be positive")
    vol = np.prod(S, axis=1)
    order = sorted(range(len(P)), key=lambda i: (-int(vol[i]), tuple(P[i]), i))
    alive = np.ones(len(P), dtype=bool)
    picks = []
    for i in order:
        if not alive[i]:
            continue
        picks.append(i)
        u, n = P[i], S[i]
        dil = np.all((P >= u - n) & (P < u + 2 * n), axis=1)
        meets = np.all((P < u + n) & (P + S > u), axis=1)
        alive &= ~(dil | meets)
    return picks


def vitali_postconditions(points, sides, picks) -> dict:
    P = np.asarray(points, dtype=np.int64)
    if P.ndim == 1:
        P = P[:, None]
    S = np.asarray(sides, dtype=np.int64)
    if S.ndim == 1:
        S = np.repeat(S[:, None], P.shape[1], axis=1)
    d = P.shape[1]
    disjoint = True
    for a in range(len(picks)):
        for b in range(a + 1, len(picks)):
            i, j = picks[a], picks[b]
            if np.all((P[i] < P[j] + S[j]) & (P[j] < P[i] + S[i])):
                disjoint = False
    cover = 3**d * int(sum(np.prod(S[i]) for i in picks))
    # every input point lies in the 3x dilation of some pick
    dil = np.zeros(len(P), dtype=bool)
    for i in picks:
        dil |= np.all((P >= P[i] - S[i]) & (P < P[i] + 2 * S[i]), axis=1)
    return {"disjoint": disjoint, "coverage": cover, "count": len(P), "covers": cover >= len(P),
            "dilated_cover": bool(dil.all())}
