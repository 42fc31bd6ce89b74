"""Estimation of the effective operator Fbar(M) and homogenization experiments.

Two independent estimators:

contact_dichotomy
    bisect ell on the contact fractions of the two obstacle problems on a large
    cube; below the critical level the obstacle from above touches on a set of
    positive density, above it the one from below does.
corrector_zero
    bisect ell on the sign of the ensemble mean of w(0, 0), w the approximate
    corrector on the unit cylinder with oscillation scale eps.

Both use common random numbers: the same environments at every ell, so each
per-sample quantity is monotone in ell and the bisection is well posed.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .environment import EnvSpec, child_seeds, sample_env
from .errors import ConfigurationError, InvariantViolation
from .grid import GridSpec, ParabolicDomain, SpaceTimePoint, cube
from .obstacle import solve_obstacle
from .operators import OperatorSpec, SymMatrix
from .parallel import ensemble_map
from .solver import effective_grid, make_grid, march, solve_effective

METHODS = ("contact_dichotomy", "corrector_zero")


@dataclass
class EffectiveEstimate:
    M: SymMatrix
    fbar: float
    method: str
    bracket: tuple
    n_env: int
    eps_or_scale: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def width(self) -> float:
        return self.bracket[1] - self.bracket[0]

    def to_dict(self) -> dict:
        return {
            "M": list(self.M.upper),
            "fbar": self.fbar,
            "method": self.method,
            "ell_lo": self.bracket[0],
            "ell_hi": self.bracket[1],
            "n_env": self.n_env,
            "eps_or_scale": self.eps_or_scale,
            **{k: v for k, v in self.diagnostics.items()},
        }


def _samples(env_spec, n_env, seed):
    if env_spec is None:
        return [None] * n_env
    return [sample_env(env_spec, s) for s in child_seeds(seed, n_env)]


def _f0_range(op: OperatorSpec, env_spec, M: SymMatrix, d: int) -> tuple:
    """Range of F_M(0, .) over the coefficient range, exact and discrete."""
    opM = op.with_shift(M)
    vals = [opM.base_at(SymMatrix.zero(d)), opM.base_at_zero_discrete(d)]
    lo, hi = op.coef_range(env_spec)
    out = [a * v for a in (lo, hi) for v in vals]
    return min(out), max(out)


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return float(x.mean()), se


def contact_fractions(op: OperatorSpec, env_spec: Optional[EnvSpec], M: SymMatrix, ell: float, scale_k: int,
                      n_env: int, seed: int = 0, *, scale: Optional[float] = None, threads: int = None,
                      nodes_per_cell: int = 8, tol_factor: float = 0.0, envs=None, grid=None) -> dict:
    """Ensemble contact fractions of both obstacle problems on C_R, R = 3^scale_k
    (or ``scale``), unit oscillation scale."""
    if n_env < 1:
        raise ConfigurationError("n_env", "must be >= 1")
    R = float(scale) if scale is not None else 3.0**scale_k
    d = M.d
    if grid is None:
        grid = make_grid(op.with_shift(M), env_spec, cube(R, d), eps=1.0, nodes_per_cell=nodes_per_cell)
    if envs is None:
        envs = _samples(env_spec, n_env, seed)

    def one(env):
        a = solve_obstacle(op, env, ell, 1.0, grid, "above", M, tol_factor, save="final")
        b = solve_obstacle(op, env, ell, 1.0, grid, "below", M, tol_factor, save="final")
        return a.fraction, b.fraction

    res = np.array(ensemble_map(one, envs, threads))
    pa, sa = _mean_se(res[:, 0])
    pb, sb = _mean_se(res[:, 1])
    return {"p_above_est": pa, "p_below_est": pb, "stderr_above": sa, "stderr_below": sb,
            "stderr": max(sa, sb), "samples": res, "scale": R}


def _corrector_center(op, env, M, ell, eps, grid):
    res = march(op.with_shift(M), env, grid, eps, float(ell), None, clip=0, save="final")
    u = res.field.final()
    mid = tuple(s // 2 for s in u.shape)
    return float(u[mid]), float(np.max(np.abs(u)))


def corrector_grid(op, env_spec, M, eps, nodes_per_cell=8, time_align=1) -> GridSpec:
    return make_grid(op.with_shift(M), env_spec, cube(1.0, M.d), eps=eps, nodes_per_cell=nodes_per_cell,
                     time_align=time_align)


def estimate_fbar(op: OperatorSpec, env_spec: Optional[EnvSpec], M: SymMatrix, method: str, tol: float,
                  budget: int, seed: int = 0, *, n_env: int = 16, scale: float = 9.0, threads: int = None,
                  predicate: str = "crossing", fraction_threshold: float = 0.5, nodes_per_cell: int = 8,
                  tol_factor: float = 0.0) -> EffectiveEstimate:
    """Bisection estimate of Fbar(M).

    The dichotomy runs on C_scale with unit cells; the corrector runs on Q_1
    with eps = 1/scale, which is the same problem rescaled. ``budget`` caps the
    number of PDE solves. ``predicate`` selects the dichotomy test:
    "crossing" (p_above > p_below) or "threshold" (p_above > fraction_threshold).
    """
    if method not in METHODS:
        raise ConfigurationError("method", f"unknown method {method!r}")
    if not tol > 0:
        raise ConfigurationError("tol", "must be positive")
    if predicate not in ("crossing", "threshold"):
        raise ConfigurationError("predicate", f"unknown predicate {predicate!r}")
    if env_spec is None or not env_spec.has_cells or not op.modulated:
        # deterministic problem: one sample is the ensemble
        n_env = 1
    d = M.d
    fmin, fmax = _f0_range(op, env_spec, M, d)
    lo, hi = -fmax - 1.0, -fmin + 1.0
    iters = max(0, math.ceil(math.log2((hi - lo) / tol)))
    per_iter = n_env * (2 if method == "contact_dichotomy" else 1)
    if iters * per_iter > budget:
        raise ConfigurationError("budget", f"{iters} bisection steps x {per_iter} solves exceed budget {budget}")
    envs = _samples(env_spec, n_env, seed)
    diag = {"p_above": float("nan"), "p_below": float("nan"), "corrector_sup": float("nan")}
    if method == "contact_dichotomy":
        grid = make_grid(op.with_shift(M), env_spec, cube(scale, d), eps=1.0, nodes_per_cell=nodes_per_cell)

        def below_critical(ell):
            cf = contact_fractions(op, env_spec, M, ell, 0, n_env, seed, threads=threads, tol_factor=tol_factor,
                                   envs=envs, grid=grid)
            diag["p_above"], diag["p_below"] = cf["p_above_est"], cf["p_below_est"]
            if predicate == "crossing":
                return cf["p_above_est"] > cf["p_below_est"]
            return cf["p_above_est"] > fraction_threshold
        eps_or_scale = float(scale)
    else:
        eps = 1.0 / scale
        grid = corrector_grid(op, env_spec, M, eps, nodes_per_cell)

        def below_critical(ell):
            vals = ensemble_map(lambda e: _corrector_center(op, e, M, ell, eps, grid), envs, threads)
            vals = np.array(vals)
            diag["corrector_sup"] = float(vals[:, 1].mean())
            return vals[:, 0].mean() < 0.0
        eps_or_scale = eps
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if below_critical(mid):
            lo = mid
        else:
            hi = mid
    fbar = -0.5 * (lo + hi)
    return EffectiveEstimate(M, fbar, method, (lo, hi), n_env, eps_or_scale, diag)


@dataclass
class EffectiveTable:
    """Fbar sampled along a matrix ray.

    family "scalar" (d=1): M = [m]. d=2 families "identity" (m*I) and
    "saddle" (m*diag(1,-1)). ``widths`` are the bracket widths of the
    estimates; ``fbar0`` is the value subtracted so that Fbar(0) = 0.
    """

    ms: list
    fbars: list
    widths: list
    lam_eff: float
    Lam_eff: float
    family: str = "scalar"
    fbar0: float = 0.0

    def __post_init__(self):
        if not (len(self.ms) == len(self.fbars) == len(self.widths)):
            raise ValueError("table columns differ in length")
        order = np.argsort(self.ms)
        self.ms = [float(self.ms[i]) for i in order]
        self.fbars = [float(self.fbars[i]) for i in order]
        self.widths = [float(self.widths[i]) for i in order]

    def matrix(self, m: float) -> SymMatrix:
        if self.family == "scalar":
            return SymMatrix.scalar(m)
        if self.family == "identity":
            return SymMatrix.identity(2, m)
        return SymMatrix.diag(m, -m)

    def as_arrays(self):
        return np.array(self.ms), np.array(self.fbars) - self.fbar0

    def __call__(self, m):
        xs, ys = self.as_arrays()
        m = np.asarray(m, dtype=float)
        if np.any(m < xs[0]) or np.any(m > xs[-1]):
            raise ConfigurationError("table", "evaluation outside the tabulated range")
        return np.interp(m, xs, ys)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EffectiveTable":
        return cls(**d)


def homogeneous_table(est_pos: EffectiveEstimate, est_neg: EffectiveEstimate, extent: float, lam_eff: float,
                      Lam_eff: float) -> EffectiveTable:
    """d=1 table from estimates at M = +1 and M = -1 using positive 1-homogeneity
    Fbar(t M) = t Fbar(M), t > 0 (inherited from every operator in the zoo)."""
    ms = [-extent, 0.0, extent]
    fb = [extent * est_neg.fbar, 0.0, extent * est_pos.fbar]
    w = [extent * est_neg.width, 0.0, extent * est_pos.width]
    return EffectiveTable(ms, fb, w, lam_eff, Lam_eff, "scalar", 0.0)


def build_table(op, env_spec, ms: Sequence[float], method: str, tol: float, budget: int, seed: int = 0,
                family: str = "scalar", **kw) -> EffectiveTable:
    ests = []
    for m in ms:
        dummy = EffectiveTable([0.0], [0.0], [0.0], 1, 1, family)
        ests.append(estimate_fbar(op, env_spec, dummy.matrix(m), method, tol, budget, seed, **kw))
    d = 1 if family == "scalar" else 2
    lam_eff, Lam_eff = op.ellipticity_bounds(d, env_spec if op.modulated else None)
    fb = [e.fbar for e in ests]
    fbar0 = fb[list(ms).index(0.0)] if 0.0 in list(ms) else 0.0
    return EffectiveTable(list(ms), fb, [e.width for e in ests], lam_eff, Lam_eff, family, fbar0)


def ellipticity_of_fbar(table: EffectiveTable) -> dict:
    """Check lam_eff |N| - slack <= Fbar(M+N) - Fbar(M) <= Lam_eff |N| + slack on all sampled pairs.

    Only pairs whose difference is positive semidefinite are used; along the
    saddle ray no such pair exists and the check is vacuous.
    """
    if len(table.ms) < 3:
        raise ValueError("need at least 3 samples along the ray")
    violations = []
    n = len(table.ms)
    pairs = 0
    for i in range(n):
        for j in range(i + 1, n):
            m1, m2 = table.ms[i], table.ms[j]
            if table.family == "saddle":
                continue
            dN = m2 - m1
            nrm = dN
            diff = table.fbars[j] - table.fbars[i]
            slack = 2.0 * (table.widths[i] + table.widths[j])
            lo = table.lam_eff * nrm - slack
            hi = table.Lam_eff * nrm + slack
            pairs += 1
            if not (lo <= diff <= hi):
                violations.append({"M": m1, "M+N": m2, "diff": diff, "lower": lo, "upper": hi})
    return {"pairs": pairs, "violations": violations, "pass": not violations}


def _quantile_stats(x, rng, n_boot=400):
    x = np.asarray(x, dtype=float)
    med = float(np.median(x))
    q90 = float(np.quantile(x, 0.9))
    if x.size < 2:
        return med, q90, 0.0, 0.0
    idx = rng.integers(0, x.size, size=(n_boot, x.size))
    boot = x[idx]
    se_med = float(np.median(boot, axis=1).std(ddof=1))
    se_q90 = float(np.quantile(boot, 0.9, axis=1).std(ddof=1))
    return med, q90, se_med, se_q90


def _fit_slope(eps_list, vals):
    x = np.log(1.0 / np.asarray(eps_list, dtype=float))
    y = np.log(np.maximum(np.asarray(vals, dtype=float), 1e-300))
    if x.size < 2:
        return float("nan")
    return float(np.polyfit(x, y, 1)[0])


def sine_data(X, t):
    """sin(pi (x+1)/2) at t = 0 on (-1,1), zero on the lateral sides."""
    x = X[..., 0]
    if t <= 0:
        return np.sin(0.5 * np.pi * (x + 1.0))
    return np.zeros(x.shape)


def decreasing_within(stats: Sequence[dict], key: str, se_key: str, k: float = 2.0) -> list:
    """Consecutive pairs (coarse, fine): strict decrease of the point estimate, and
    whether the decrease is also significant at k combined standard errors."""
    out = []
    for a, b in zip(stats[:-1], stats[1:]):
        diff = a[key] - b[key]
        se = math.hypot(a[se_key], b[se_key])
        out.append({"from": a["eps"], "to": b["eps"], "decrease": diff, "strict": diff > 0,
                    "significant": diff > k * se, "not_increasing_within": diff > -k * se})
    return out


def homogenization_experiment(op: OperatorSpec, env_spec: Optional[EnvSpec], g: Callable, eps_list: Sequence[float],
                              fbar_table, n_env: int, seed: int = 0, *, h_eff: float = 1.0 / 256,
                              n_compare: int = 64, threads: int = None, nodes_per_cell: int = 8) -> dict:
    """sup-norm errors |u^eps - u| on (-1,1) x (0,1] against the effective solution.

    Errors are measured at the u^eps nodes on n_compare equally spaced times.
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list[:-1], eps_list[1:])):
        raise ConfigurationError("eps_list", "must be strictly decreasing")
    d = 1
    dom = ParabolicDomain("cube", SpaceTimePoint((0.0,) * d, 1.0), 1.0)
    eg = effective_grid(fbar_table, dom, h_eff, time_align=n_compare)
    u = solve_effective(fbar_table, eg, g, save=eg.n_time // n_compare)
    u_cmp = u.values[1:]
    envs = _samples(env_spec, n_env, seed)
    rng = np.random.default_rng(child_seeds(seed ^ 0xB007, 1)[0])
    records = []
    for eps in eps_list:
        grid = make_grid(op, env_spec, dom, eps=eps, nodes_per_cell=nodes_per_cell, time_align=n_compare)
        stride = grid.h / h_eff
        si = int(round(stride))
        if abs(stride - si) > 1e-9 or si < 1:
            raise ConfigurationError("h_eff", f"u^eps spacing {grid.h} is not a multiple of {h_eff}")
        sub = u_cmp[:, ::si]

        def one(env, grid=grid, eps=eps, sub=sub):
            r = march(op, env, grid, eps, 0.0, g, clip=0, save=grid.n_time // n_compare)
            return float(np.max(np.abs(r.field.values[1:] - sub)))

        errs = np.array(ensemble_map(one, envs, threads))
        med, q90, se_med, se_q90 = _quantile_stats(errs, rng)
        records.append({"eps": eps, "median": med, "q90": q90, "stderr_median": se_med, "stderr_q90": se_q90,
                        "mean": float(errs.mean()), "n_env": len(errs), "h": grid.h, "dt": grid.dt,
                        "errors": errs})
    return {
        "records": records,
        "slope_median": _fit_slope(eps_list, [r["median"] for r in records]),
        "slope_q90": _fit_slope(eps_list, [r["q90"] for r in records]),
        "median_trend": decreasing_within(records, "median", "stderr_median"),
        "q90_trend": decreasing_within(records, "q90", "stderr_q90"),
        "effective_h": h_eff,
    }


def corrector_decay(op: OperatorSpec, env_spec: Optional[EnvSpec], M: SymMatrix, eps_list: Sequence[float],
                    n_env: int, seed: int = 0, *, ell: float, C_hat: Optional[float] = None,
                    c_hat: Optional[float] = None, threads: int = None, nodes_per_cell: int = 8) -> dict:
    """Quantiles of sup_{Q_1} |w_eps| at fixed ell over the ensemble, per eps."""
    envs = _samples(env_spec, n_env, seed)
    rng = np.random.default_rng(child_seeds(seed ^ 0xC0DE, 1)[0])
    records = []
    for eps in eps_list:
        grid = corrector_grid(op, env_spec, M, eps, nodes_per_cell)
        vals = np.array(ensemble_map(lambda e: _corrector_center(op, e, M, ell, eps, grid), envs, threads))
        sups = vals[:, 1]
        med, q90, se_med, se_q90 = _quantile_stats(sups, rng)
        rec = {"eps": float(eps), "median": med, "q90": q90, "stderr_median": se_med, "stderr_q90": se_q90,
               "center_mean": float(vals[:, 0].mean()), "n_env": len(sups)}
        if C_hat is not None and c_hat is not None:
            le = abs(math.log(eps))
            thr = C_hat * eps ** (c_hat * le ** (-2.0 / 3.0)) if le > 0 else C_hat
            rec["threshold"] = thr
            rec["exceed_fraction"] = float(np.mean(sups > thr))
        records.append(rec)
    return {"records": records, "slope_median": _fit_slope(eps_list, [r["median"] for r in records]),
            "median_trend": decreasing_within(records, "median", "stderr_median")}


def barrier_floor(op: OperatorSpec, env_spec, d: int, delta: float) -> float:
    """beta * delta with beta = 1/(1 + 2 Lambda d): the lower bound the barrier
    (s+1)(1-|y|^2) forces on sup |w| when ell is off the critical value by delta."""
    _, up = op.eigen_constants(env_spec if op.modulated else None)
    return delta / (1.0 + 2.0 * up * d)
