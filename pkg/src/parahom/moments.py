"""Moments of the normalised obstacle masses on growing cubes.

For scale k the masses are computed on C_{3^k} (unit cells) for both
obstacle problems and divided by S^(d+1), S = max(1, sup |ell + F_M(0, .)|)
over the coefficient range. The same environment seeds are used at every k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .environment import EnvSpec, child_seeds, sample_env
from .errors import ConfigurationError
from .grid import cube
from .homogenize import _f0_range
from .obstacle import solve_obstacle
from .operators import OperatorSpec, SymMatrix
from .parallel import ensemble_map
from .solver import make_grid

CSV_FIELDS = ("k", "side", "E", "J", "V", "J_product", "n", "stderr_E", "stderr_J")


@dataclass
class MomentReport:
    k: int
    E_above: float
    E_below: float
    J_above: float
    J_below: float
    V_above: float
    V_below: float
    J_product: float
    n: int
    stderr: dict = field(default_factory=dict)

    def rows(self) -> list:
        """One CSV row per side, columns CSV_FIELDS."""
        out = []
        for side in ("above", "below"):
            out.append({
                "k": self.k, "side": side,
                "E": getattr(self, f"E_{side}"), "J": getattr(self, f"J_{side}"),
                "V": getattr(self, f"V_{side}"), "J_product": self.J_product, "n": self.n,
                "stderr_E": self.stderr[f"E_{side}"], "stderr_J": self.stderr[f"J_{side}"],
            })
        return out


def mass_scale(op: OperatorSpec, env_spec, M: SymMatrix, ell: float) -> float:
    fmin, fmax = _f0_range(op, env_spec if op.modulated else None, M, M.d)
    return max(1.0, abs(ell + fmin), abs(ell + fmax))


def report_from_masses(k: int, above, below) -> MomentReport:
    """Plug-in moments of two mass samples (same environments, same order)."""
    a = np.asarray(above, dtype=float)
    b = np.asarray(below, dtype=float)
    n = a.size
    if n < 2 or b.size != n:
        raise ConfigurationError("n_env", "need at least two paired samples")
    Ea, Eb = float(a.mean()), float(b.mean())
    Ja, Jb = float(np.mean(a**2)), float(np.mean(b**2))
    Va, Vb = Ja - Ea**2, Jb - Eb**2
    rt = math.sqrt(n)
    se = {
        "E_above": float(a.std(ddof=1) / rt), "E_below": float(b.std(ddof=1) / rt),
        "J_above": float((a**2).std(ddof=1) / rt), "J_below": float((b**2).std(ddof=1) / rt),
    }
    se["J_product"] = math.hypot(Jb * se["J_above"], Ja * se["J_below"])
    return MomentReport(k, Ea, Eb, Ja, Jb, Va, Vb, Ja * Jb, n, se)


def _cube_masses(op, env, M, ell, R, center, top, grid_kw, S, tol_factor):
    d = M.d
    dom = cube(R, d, top=top, x0=center)
    grid = make_grid(op.with_shift(M), env.spec if env is not None else None, dom, eps=1.0, **grid_kw)
    p = (d + 1)
    a = solve_obstacle(op, env, ell, 1.0, grid, "above", M, tol_factor, save="final").mass / S**p
    b = solve_obstacle(op, env, ell, 1.0, grid, "below", M, tol_factor, save="final").mass / S**p
    return a, b


def estimate_moments(op: OperatorSpec, env_spec: EnvSpec, M: SymMatrix, ell: float, k_list: Sequence[int],
                     n_env: int, seed: int = 0, *, threads: int = None, nodes_per_cell: int = 8,
                     tol_factor: float = 0.0) -> list:
    if n_env < 2:
        raise ConfigurationError("n_env", "need at least two environments")
    if any(k < 0 for k in k_list):
        raise ConfigurationError("k_list", "scales must be >= 0")
    S = mass_scale(op, env_spec, M, ell)
    envs = [sample_env(env_spec, s) for s in child_seeds(seed, n_env)]
    d = M.d
    out = []
    for k in k_list:
        R = 3.0**k
        masses = ensemble_map(
            lambda e: _cube_masses(op, e, M, ell, R, (0.0,) * d, 0.0, {"nodes_per_cell": nodes_per_cell}, S,
                                   tol_factor), envs, threads)
        masses = np.array(masses)
        out.append(report_from_masses(int(k), masses[:, 0], masses[:, 1]))
    return out


def monotonicity_check(reports: Sequence[MomentReport], n_se: float = 2.0) -> list:
    """J_above, J_below and J_product nonincreasing in k, allowing n_se times the summed standard errors."""
    res = []
    for a, b in zip(reports[:-1], reports[1:]):
        for key in ("J_above", "J_below", "J_product"):
            va, vb = getattr(a, key), getattr(b, key)
            se = a.stderr[key] + b.stderr[key]
            res.append({"k": a.k, "k_next": b.k, "quantity": key, "value": va, "value_next": vb,
                        "slack": n_se * se, "pass": bool(vb <= va + n_se * se)})
    return res


def subcube_layout(parent_k: int, d: int):
    """Centres and tops of the 3^d x 9 subcubes C_{3^(k-1)} tiling C_{3^k} (top 0)."""
    r = 3.0 ** (parent_k - 1)
    xs = [-2 * r, 0.0, 2 * r]
    tops = [-j * r * r for j in range(9)]
    cells = []
    idx = []
    for ti, t in enumerate(tops):
        for pos in np.ndindex(*(3,) * d):
            cells.append((tuple(xs[p] for p in pos), t))
            idx.append(tuple(pos) + (ti,))
    return r, cells, np.array(idx)


def adjacent_pairs(idx: np.ndarray) -> int:
    """Ordered pairs i != j of subcubes that touch (faces, edges or corners, time included)."""
    diff = np.abs(idx[:, None, :] - idx[None, :, :]).max(axis=-1)
    return int(np.sum(diff == 1))


def variance_decay_from_masses(masses: np.ndarray, idx: np.ndarray, n_se: float = 3.0) -> dict:
    """Var[average of the M subcube masses] <= V_sub/M + (1/M^2) sum_{i != j} sigma_ij,
    with sigma_ij = 0 for non-touching subcubes (finite range) and |sigma_ij| <= V_sub."""
    masses = np.asarray(masses, dtype=float)
    n, m = masses.shape
    if n < 3:
        raise ConfigurationError("n_env", "need at least three environments")
    avg = masses.mean(axis=1)
    lhs = float(avg.var(ddof=1))
    cent = avg - avg.mean()
    # standard error of a sample variance through the fourth moment
    se_lhs = float(math.sqrt(max(np.mean(cent**4) - lhs**2 * (n - 3) / (n - 1), 0.0) / n))
    v_sub = float(masses.var(ddof=1, axis=0).mean())
    c = masses - masses.mean(axis=0)
    se_sub = float(math.sqrt(max(np.mean(c**4) - v_sub**2, 0.0) / (n * m)))
    A = adjacent_pairs(idx)
    factor = (m + A) / m**2
    rhs = v_sub * factor
    slack = n_se * math.hypot(se_lhs, factor * se_sub)
    return {"lhs": lhs, "rhs": rhs, "V_sub": v_sub, "M": m, "adjacent_pairs": A, "slack": slack,
            "pass": bool(lhs <= rhs + slack)}


def variance_decay_check(op: OperatorSpec, env_spec: EnvSpec, M: SymMatrix, ell: float, parent_k: int,
                         n_env: int, seed: int = 0, *, side: str = "above", sampler: Optional[Callable] = None,
                         threads: int = None, nodes_per_cell: int = 8, tol_factor: float = 0.0) -> dict:
    """Run the subcube variance inequality on obstacle masses (or on ``sampler(n_env, M, seed)``
    when given, which bypasses the PDE)."""
    if parent_k < 1:
        raise ConfigurationError("parent_k", "must be >= 1")
    d = M.d
    r, cells, idx = subcube_layout(parent_k, d)
    if sampler is not None:
        masses = np.asarray(sampler(n_env, len(cells), seed), dtype=float)
    else:
        S = mass_scale(op, env_spec, M, ell)
        envs = [sample_env(env_spec, s) for s in child_seeds(seed, n_env)]
        col = 0 if side == "above" else 1

        def one(env):
            return [_cube_masses(op, env, M, ell, r, c, t, {"nodes_per_cell": nodes_per_cell}, S, tol_factor)[col]
                    for c, t in cells]
        masses = np.array(ensemble_map(one, envs, threads))
    out = variance_decay_from_masses(masses, idx)
    out["subcube_scale"] = r
    return out


def product_decay(reports: Sequence[MomentReport], n_se: float = 2.0) -> dict:
    ks = np.array([r.k for r in reports], dtype=float)
    J = np.array([r.J_product for r in reports])
    steps = []
    for a, b in zip(reports[:-1], reports[1:]):
        se = math.hypot(a.stderr["J_product"], b.stderr["J_product"])
        steps.append({"k": a.k, "k_next": b.k, "strict": b.J_product < a.J_product,
                      "within": b.J_product <= a.J_product + n_se * se})
    pos = J > 0
    slope = float(np.polyfit(ks[pos], np.log(J[pos]), 1)[0]) if pos.sum() >= 2 else float("nan")
    return {"log_slope": slope, "steps": steps, "pass": all(s["strict"] for s in steps)}
