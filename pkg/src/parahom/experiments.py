"""Experiment runners behind the CLI.

Each runner reads its parameters first (so configuration errors surface
before any computation), then computes, and returns an ExperimentResult with
CSV rows, summary metrics and a list of pass/fail checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .config import Config
from .environment import EnvSpec, child_seeds, sample_env
from .errors import ConfigurationError
from .ergodic import (CubeSequence, cell_sum_process, contact_measure_process, ergodic_average,
                      maximal_inequality_check, subadditivity_spot_check, vitali_postconditions, vitali_select,
                      volume_process)
from .grid import GridSpec, ParabolicDomain, SpaceTimeField, SpaceTimePoint, box, cube
from .homogenize import (METHODS, barrier_floor, corrector_decay, estimate_fbar, homogeneous_table,
                         homogenization_experiment, sine_data)
from .moments import (CSV_FIELDS, estimate_moments, monotonicity_check, product_decay, variance_decay_check)
from .obstacle import nesting_check, solve_obstacle
from .operators import BASE_KINDS, KINDS, OperatorSpec, SymMatrix, eval_F
from .regularity import (inf_convolution_x, maximizer_distance_check, semiconvexity_check, separation_check,
                         sup_convolution_x)
from .solver import comparison_check, make_grid, march


@dataclass
class ExperimentResult:
    rows: list
    header: list
    metrics: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks)


def _check(name, ok, **detail):
    return {"check": name, "pass": bool(ok), **detail}


def _common(cfg: Config):
    es = cfg.env_spec()
    return es, es.d, cfg.int("experiment", "n_env", 8)


def _grid_kw(cfg):
    return {"cfl": cfg.float("grid", "cfl", 0.9), "nodes_per_cell": cfg.int("grid", "nodes_per_cell", 8)}


def _initial(name: str, d: int) -> Callable:
    if name == "sine":
        def g(X, t):
            x = X[..., 0]
            base = np.sin(0.5 * np.pi * (x + 1.0))
            if d == 2:
                base = base * np.sin(0.5 * np.pi * (X[..., 1] + 1.0))
            return base if t <= 0 else np.zeros(x.shape)
        return g
    if name == "zero":
        return lambda X, t: np.zeros(X.shape[:-1])
    if name == "quadratic":
        return lambda X, t: 0.5 * np.sum(X**2, axis=-1) + t
    raise ConfigurationError("solve.initial", f"unknown initial data {name!r}")


def _fbar_auto(cfg, sec, op, es, M, seed, threads):
    """ell from the section (number) or -Fbar estimated by the corrector method ('auto')."""
    text = cfg.str(sec, "ell", "auto")
    if text != "auto":
        return cfg.float(sec, "ell"), None
    est = estimate_fbar(op, es, M, "corrector_zero", cfg.float(sec, "auto_tol", 0.01), cfg.int(sec, "auto_budget", 10**6),
                        seed, n_env=cfg.int(sec, "auto_n_env", 16), scale=cfg.float(sec, "auto_scale", 9.0),
                        threads=threads)
    return -est.fbar, est


# --- solve -----------------------------------------------------------------------------------

def run_solve(cfg: Config, seed: int, threads: int) -> ExperimentResult:
    es, d, _ = _common(cfg)
    op = cfg.operator()
    r = cfg.float("solve", "r", 1.0)
    eps = cfg.float("solve", "eps", 0.25)
    g = _initial(cfg.str("solve", "initial", "sine"), d)
    rhs = cfg.float("solve", "rhs", 0.0)
    pairs = cfg.int("solve", "comparison_pairs", 0)
    kinds = cfg.words("solve", "comparison_kinds", [op.kind])
    for k in kinds:
        if k not in KINDS:
            raise ConfigurationError("solve.comparison_kinds", f"unknown operator kind {k!r}")
    dom = ParabolicDomain("cube", SpaceTimePoint((0.0,) * d, r * r), r)
    grid = make_grid(op, es, dom, eps, h=cfg.float("grid", "h", None), dt=cfg.float("grid", "dt", None), **_grid_kw(cfg))
    env = sample_env(es, child_seeds(seed, 1)[0])
    res = march(op, env, grid, eps, rhs, g, save="final")
    u = res.field.final()
    X = grid.coords().reshape(-1, d)
    t = float(res.field.times[-1])
    header = ["t", "x"] + (["y"] if d == 2 else []) + ["u"]
    rows = []
    for i, val in enumerate(u.reshape(-1)):
        row = {"t": t, "x": X[i, 0], "u": val}
        if d == 2:
            row["y"] = X[i, 1]
        rows.append(row)
    metrics = {"sup_norm": float(np.abs(u).max()), "h": grid.h, "dt": grid.dt, "n_time": grid.n_time}
    checks = []
    for j, k in enumerate(kinds):
        if pairs <= 0:
            break
        opk = cfg.operator(k)
        gk = make_grid(opk, es, dom, eps, h=grid.h, **_grid_kw(cfg))
        envk = env if opk.modulated else None
        out = comparison_check(opk, envk, gk, pairs, seed=child_seeds(seed, len(kinds) + 1)[j + 1], eps=eps,
                               threads=threads)
        metrics[f"comparison_{k}"] = out["max_violation"]
        checks.append(_check(f"comparison[{k}]", out["max_violation"] <= 1e-12, value=out["max_violation"],
                             bound=1e-12, pairs=pairs))
    return ExperimentResult(rows, header, metrics, checks)


# --- corrector -------------------------------------------------------------------------------

def run_corrector(cfg: Config, seed: int, threads: int) -> ExperimentResult:
    es, d, n_env = _common(cfg)
    op = cfg.operator()
    sec = "corrector"
    M = cfg.matrix(sec, "M", d)
    eps_list = cfg.floats(sec, "eps_list")
    offsets = cfg.floats(sec, "offsets", [0.0])
    floor_factor = cfg.float(sec, "floor_factor", 0.5)
    check_trend = cfg.bool(sec, "check_nonincreasing", True)
    n_se = cfg.float(sec, "n_stderr", 2.0)
    ell0, est = _fbar_auto(cfg, sec, op, es, M, seed, threads)
    rows, checks = [], []
    metrics = {"ell_critical": ell0}
    if est is not None:
        metrics["fbar_bracket"] = list(est.bracket)
    for off in offsets:
        out = corrector_decay(op, es, M, eps_list, n_env, seed, ell=ell0 + off, threads=threads)
        for rec in out["records"]:
            rows.append({"offset": off, **{k: rec[k] for k in ("eps", "median", "q90", "stderr_median",
                                                                 "stderr_q90", "center_mean", "n_env")}})
        metrics[f"slope_median[{off:g}]"] = out["slope_median"]
        if off == 0.0 and check_trend:
            for st in out["median_trend"]:
                lim = st["decrease"] + n_se * math.hypot(*(r["stderr_median"] for r in out["records"]
                                                           if r["eps"] in (st["from"], st["to"])))
                checks.append(_check(f"median nonincreasing {st['from']:g}->{st['to']:g}", lim >= 0,
                                     value=st["decrease"]))
        if off != 0.0:
            floor = floor_factor * barrier_floor(op, es, d, abs(off))
            low = min(r["median"] for r in out["records"])
            checks.append(_check(f"floor at offset {off:g}", low >= floor, value=low, bound=floor))
    return ExperimentResult(rows, ["offset", "eps", "median", "q90", "stderr_median", "stderr_q90", "center_mean",
                                   "n_env"], metrics, checks)


# --- obstacle --------------------------------------------------------------------------------

def run_obstacle(cfg: Config, seed: int, threads: int) -> ExperimentResult:
    es, d, n_env = _common(cfg)
    op = cfg.operator()
    sec = "obstacle"
    M = cfg.matrix(sec, "M", d, SymMatrix.zero(d))
    ells = sorted(cfg.floats(sec, "ell_list"))
    R = cfg.float(sec, "scale", 3.0)
    tol_factor = cfg.float(sec, "tol_factor", 10.0)
    do_nest = cfg.bool(sec, "nesting", True)
    grid = make_grid(op.with_shift(M), es, cube(R, d), 1.0, h=cfg.float("grid", "h", None),
                     dt=cfg.float("grid", "dt", None), **_grid_kw(cfg))
    envs = [sample_env(es, s) for s in child_seeds(seed, n_env)]
    rows, checks = [], []
    worst = {"order": 0.0, "sign": 0.0, "monotone_frac": 0, "monotone_v": 0.0}
    for e_i, env in enumerate(envs):
        prev = None
        for ell in ells:
            up = solve_obstacle(op, env, ell, 1.0, grid, "above", M, tol_factor, save="all")
            lo = solve_obstacle(op, env, ell, 1.0, grid, "below", M, tol_factor, save="all")
            w = march(op.with_shift(M), env, grid, 1.0, ell, None, save="all").field.values
            worst["order"] = max(worst["order"], float((lo.v.values - w).max()), float((w - up.v.values).max()))
            worst["sign"] = max(worst["sign"], float(-up.v.values.min()), float(lo.v.values.max()))
            if prev is not None:
                pu, pl = prev
                if up.fraction > pu.fraction or lo.fraction < pl.fraction:
                    worst["monotone_frac"] += 1
                worst["monotone_v"] = max(worst["monotone_v"], float((pu.v.values - up.v.values).max()),
                                          float((pl.v.values - lo.v.values).max()))
            prev = (up, lo)
            for s in (up, lo):
                rows.append({"env": e_i, "ell": ell, "side": s.side, "measure": s.contact_measure,
                             "fraction": s.fraction, "mass": s.mass})
    checks.append(_check("v_below <= w <= v_above", worst["order"] <= 0.0, value=worst["order"]))
    checks.append(_check("sign constraints", worst["sign"] <= 0.0, value=worst["sign"]))
    checks.append(_check("contact fractions monotone in ell", worst["monotone_frac"] == 0,
                         value=worst["monotone_frac"]))
    checks.append(_check("solutions monotone in ell", worst["monotone_v"] <= 0.0, value=worst["monotone_v"]))
    metrics = dict(worst)
    if do_nest:
        ell_n = cfg.float(sec, "nesting_ell", ells[len(ells) // 2])
        T = R * R
        K2 = cube(R, d)
        K1_time = ParabolicDomain("cube", SpaceTimePoint((0.0,) * d, -0.5 * T), R, 0.5 * T)
        K1_sub = box((-0.5 * R,) * d, R, -T, 0.5 * T)
        for e_i, env in enumerate(envs[: cfg.int(sec, "nesting_envs", 2)]):
            for name, K1 in (("shared", K1_time), ("interior", K1_sub)):
                for side in ("above", "below"):
                    out = nesting_check(op, env, ell_n, 1.0, K1, K2, grid.h, grid.dt, side, M, tol_factor)
                    checks.append(_check(f"nesting[{name},{side},env{e_i}]", out["pass"], value=out["mismatches"],
                                         ambiguous=out["ambiguous"]))
    return ExperimentResult(rows, ["env", "ell", "side", "measure", "fraction", "mass"], metrics, checks)


# --- effective -------------------------------------------------------------------------------

def _harmonic_expect(es: EnvSpec, M: SymMatrix) -> float:
    tab = es.table_array
    if tab.shape[0] != 1:
        raise ConfigurationError("effective.expect", "harmonic expectation needs a time-independent table")
    return float(1.0 / np.mean(1.0 / tab)) * M.upper[0]


def run_effective(cfg: Config, seed: int, threads: int) -> ExperimentResult:
    es, d, n_env = _common(cfg)
    sec = "effective"
    kinds = cfg.words(sec, "operators", [cfg.str("operator", "kind")])
    ops = [cfg.operator(k) for k in kinds]
    Ms = cfg.matrices(sec, "M_list", d)
    methods = cfg.words(sec, "methods", list(METHODS))
    for m in methods:
        if m not in METHODS:
            raise ConfigurationError(f"{sec}.methods", f"unknown method {m!r}")
    tol = cfg.float(sec, "tol", 0.01)
    tol_rel = cfg.bool(sec, "tol_relative", True)
    budget = cfg.int(sec, "budget", 10**6)
    scale = cfg.float(sec, "scale", 9.0)
    predicate = cfg.str(sec, "predicate", "crossing")
    thr = cfg.float(sec, "fraction_threshold", 0.5)
    expect = cfg.str(sec, "expect", "none")
    expect_rtol = cfg.float(sec, "expect_rtol", 0.01)
    expect_abs1p = cfg.bool(sec, "expect_scale_1p", True)
    disc = cfg.float(sec, "discretization_slack", 0.01)
    if expect not in ("none", "exact", "harmonic"):
        try:
            float(expect)
        except ValueError:
            raise ConfigurationError(f"{sec}.expect", f"unknown expectation {expect!r}") from None
    rows, checks = [], []
    metrics = {}
    for op in ops:
        for M in Ms:
            ref = max(abs(op.base_at(M) * a) for a in op.coef_range(es if op.modulated else None))
            tol_M = tol * (1 + ref) if tol_rel else tol
            ests = {}
            for meth in methods:
                est = estimate_fbar(op, es, M, meth, tol_M, budget, seed, n_env=n_env, scale=scale, threads=threads,
                                    predicate=predicate, fraction_threshold=thr,
                                    nodes_per_cell=cfg.int("grid", "nodes_per_cell", 8))
                ests[meth] = est
                expected = None
                if expect == "exact":
                    a = es.value if (op.modulated and es.kind == "constant") else 1.0
                    if op.modulated and es.kind != "constant":
                        raise ConfigurationError(f"{sec}.expect", "exact expectation needs constant coefficients")
                    expected = a * op.base_at(M)
                elif expect == "harmonic":
                    expected = _harmonic_expect(es, M)
                elif expect != "none":
                    expected = float(expect)
                row = {"operator": op.kind, "M": " ".join("%.17g" % v for v in M.upper), "method": meth,
                       "fbar": est.fbar, "ell_lo": est.bracket[0], "ell_hi": est.bracket[1], "n_env": est.n_env,
                       "eps_or_scale": est.eps_or_scale, "p_above": est.diagnostics["p_above"],
                       "p_below": est.diagnostics["p_below"], "corrector_sup": est.diagnostics["corrector_sup"],
                       "expected": expected if expected is not None else float("nan")}
                rows.append(row)
                name = f"{op.kind} M=({', '.join('%g' % v for v in M.upper)}) {meth}"
                if expected is not None:
                    allowed = expect_rtol * ((1 + abs(expected)) if expect_abs1p else abs(expected))
                    checks.append(_check(f"fbar matches expectation: {name}", abs(est.fbar - expected) <= allowed,
                                         value=est.fbar, expected=expected, allowed=allowed))
                lo_a, hi_a = op.coef_range(es if op.modulated else None)
                vals = [a * op.base_at(M) for a in (lo_a, hi_a)]
                sl = est.width + disc * (1 + ref)
                checks.append(_check(f"sandwich: {name}", min(vals) - sl <= est.fbar <= max(vals) + sl,
                                     value=est.fbar, bound=[min(vals), max(vals)]))
            if len(ests) == 2:
                a, b = ests["contact_dichotomy"], ests["corrector_zero"]
                allowed = a.width + b.width + 2 * disc * (1 + ref)
                diff = abs(a.fbar - b.fbar)
                metrics[f"agreement {op.kind} M=({', '.join('%g' % v for v in M.upper)})"] = diff
                checks.append(_check(f"method agreement: {op.kind} M=({', '.join('%g' % v for v in M.upper)})",
                                     diff <= allowed, value=diff, allowed=allowed))
    header = ["operator", "M", "method", "fbar", "ell_lo", "ell_hi", "n_env", "eps_or_scale", "p_above", "p_below",
              "corrector_sup", "expected"]
    return ExperimentResult(rows, header, metrics, checks)


# --- rate ------------------------------------------------------------------------------------

def run_rate(cfg: Config, seed: int, threads: int) -> ExperimentResult:
    es, d, n_env = _common(cfg)
    if d != 1:
        raise ConfigurationError("environment.d", "the rate experiment runs in d=1")
    op = cfg.operator()
    sec = "rate"
    eps_list = cfg.floats(sec, "eps_list")
    method = cfg.str(sec, "table_method", "corrector_zero")
    if method not in METHODS:
        raise ConfigurationError(f"{sec}.table_method", f"unknown method {method!r}")
    t_tol = cfg.float(sec, "table_tol", 1e-3)
    t_scale = cfg.float(sec, "table_scale", 9.0)
    t_n = cfg.int(sec, "table_n_env", 16)
    extent = cfg.float(sec, "extent", 8.0)
    h_eff = cfg.float(sec, "h_eff", 1.0 / 256)
    stats = cfg.words(sec, "require_decreasing", ["median", "q90"])
    n_se = cfg.float(sec, "n_stderr", 2.0)
    ests = []
    for m in (1.0, -1.0):
        ests.append(estimate_fbar(op, es, SymMatrix.scalar(m), method, t_tol, 10**7, seed, n_env=t_n, scale=t_scale,
                                  threads=threads))
    lam_eff, Lam_eff = op.ellipticity_bounds(1, es if op.modulated else None)
    table = homogeneous_table(ests[0], ests[1], extent, lam_eff, Lam_eff)
    out = homogenization_experiment(op, es, sine_data, eps_list, table, n_env, seed, h_eff=h_eff, threads=threads,
                                    nodes_per_cell=cfg.int("grid", "nodes_per_cell", 8))
    rows = [{k: r[k] for k in ("eps", "median", "q90", "stderr_median", "stderr_q90", "mean", "n_env", "h", "dt")}
            for r in out["records"]]
    metrics = {"fbar_plus": ests[0].fbar, "fbar_minus": ests[1].fbar, "slope_median": out["slope_median"],
               "slope_q90": out["slope_q90"]}
    checks = []
    for st in stats:
        if st not in ("median", "q90"):
            raise ConfigurationError(f"{sec}.require_decreasing", f"unknown statistic {st!r}")
        for step in out[f"{st}_trend"]:
            # strict decrease of the estimate; the 2-stderr band is reported alongside
            checks.append(_check(f"{st} decreasing {step['from']:g}->{step['to']:g}", step["strict"],
                                 value=step["decrease"], significant=step["significant"]))
    return ExperimentResult(rows, list(rows[0].keys()), metrics, checks)


# --- moments ---------------------------------------------------------------------------------

def run_moments(cfg: Config, seed: int, threads: int) -> ExperimentResult:
    es, d, n_env = _common(cfg)
    op = cfg.operator()
    sec = "moments"
    M = cfg.matrix(sec, "M", d)
    k_list = cfg.ints(sec, "k_list", [1, 2, 3])
    parent_k = cfg.int(sec, "parent_k", 2)
    side = cfg.str(sec, "variance_side", "above")
    inject = cfg.str(sec, "inject_violation", "none")
    n_se = cfg.float(sec, "n_stderr", 2.0)
    var_env = cfg.int(sec, "variance_n_env", n_env)
    if inject not in ("none", "reverse"):
        raise ConfigurationError(f"{sec}.inject_violation", f"unknown fixture {inject!r}")
    if side not in ("above", "below"):
        raise ConfigurationError(f"{sec}.variance_side", "must be above or below")
    if sorted(k_list) != list(k_list) or len(set(k_list)) != len(k_list):
        raise ConfigurationError(f"{sec}.k_list", "must be strictly increasing")
    ell, est = _fbar_auto(cfg, sec, op, es, M, seed, threads)
    reports = estimate_moments(op, es, M, ell, k_list, n_env, seed, threads=threads)
    if inject == "reverse":
        # negative-control fixture: relabel scales in reverse order
        Js = [(r.J_above, r.J_below, r.J_product, dict(r.stderr)) for r in reports][::-1]
        for r, (a, b, p, se) in zip(reports, Js):
            r.J_above, r.J_below, r.J_product, r.stderr = a, b, p, se
    checks = []
    for m in monotonicity_check(reports, n_se):
        checks.append(_check(f"{m['quantity']} nonincreasing k={m['k']}->{m['k_next']}", m["pass"],
                             value=m["value_next"] - m["value"], slack=m["slack"]))
    pd = product_decay(reports, n_se)
    for s in pd["steps"]:
        checks.append(_check(f"J_product decreasing k={s['k']}->{s['k_next']}", s["strict"]))
    vd = variance_decay_check(op, es, M, ell, parent_k, var_env, seed ^ 0x5BC, side=side, threads=threads)
    checks.append(_check("variance decay over subcubes", vd["pass"], value=vd["lhs"], bound=vd["rhs"],
                         slack=vd["slack"], subcube_scale=vd["subcube_scale"]))
    metrics = {"ell": ell, "J_product_log_slope": pd["log_slope"], "variance": vd}
    return ExperimentResult(reports, list(CSV_FIELDS), metrics, checks)


# --- ergodic ---------------------------------------------------------------------------------

def _vitali_instances(n, dim, seed):
    """Count failures of the selection postconditions over n random instances
    (distinct lattice points, sides from a random nested chain)."""
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n):
        span = int(rng.integers(3, 13))
        k = int(rng.integers(1, min(40, span**dim) + 1))
        flat = rng.choice(span**dim, size=k, replace=False)
        pts = np.stack(np.unravel_index(flat, (span,) * dim), axis=1)
        # side vectors drawn from one nested chain, as for a cube sequence
        chain = np.cumsum(rng.integers(1, 3, size=(4, dim)), axis=0)
        sides = chain[rng.integers(0, 4, size=k)]
        picks = vitali_select(pts, sides)
        pc = vitali_postconditions(pts, sides, picks)
        if not (pc["disjoint"] and pc["covers"] and pc["dilated_cover"]):
            bad += 1
    return bad


def run_ergodic(cfg: Config, seed: int, threads: int) -> ExperimentResult:
    es, d, n_env = _common(cfg)
    sec = "ergodic"
    pname = cfg.str(sec, "process", "contact")
    kind = cfg.str(sec, "cube", "parabolic")
    stages = cfg.ints(sec, "stages", [2, 4, 8])
    drift_max = cfg.float(sec, "drift_max", 0.1)
    n_vit = cfg.int(sec, "vitali_instances", 500)
    vit_dims = cfg.ints(sec, "vitali_dims", [1, 2, 3])
    alpha = cfg.float(sec, "maximal_alpha", 0.5)
    max_env = cfg.int(sec, "maximal_n_env", 200)
    max_stages = cfg.ints(sec, "maximal_stages", [1, 2, 4, 8])
    max_p = cfg.float(sec, "maximal_p", 0.1)
    if kind not in ("parabolic", "standard"):
        raise ConfigurationError(f"{sec}.cube", f"unknown cube kind {kind!r}")
    seq = CubeSequence.parabolic(d, stages) if kind == "parabolic" else CubeSequence.standard(d + 1, stages)
    if pname == "contact":
        op = cfg.operator()
        M = cfg.matrix(sec, "M", d)
        ell = cfg.float(sec, "ell")
        proc = contact_measure_process(op, M, ell, cfg.str(sec, "side", "above"))
    elif pname == "cell_sum":
        proc = cell_sum_process(es)
    elif pname == "volume":
        proc = volume_process()
    else:
        raise ConfigurationError(f"{sec}.process", f"unknown process {pname!r}")
    res = ergodic_average(proc, seq, es, n_env, seed, threads)
    rows = [{"stage": s["stage"], "sides": s["sides"], "volume": s["volume"], "mean": s["mean"], "var": s["var"],
             "stderr": s["stderr"]} for s in res["stages"]]
    checks = [_check("last-two-stage drift", res["pooled_drift"] <= drift_max, value=res["pooled_drift"],
                     bound=drift_max)]
    metrics = {"pooled_drift": res["pooled_drift"], "variance_shrinks": res["variance_shrinks"]}
    for j, dim in enumerate(vit_dims):
        if n_vit <= 0:
            break
        bad = _vitali_instances(n_vit, dim, child_seeds(seed ^ 0x717, len(vit_dims))[j])
        checks.append(_check(f"vitali postconditions d={dim}", bad == 0, value=bad, instances=n_vit))
    if max_env > 0:
        cb = EnvSpec.checkerboard(0.0 + 1e-3, 1.0, max_p, d=d)
        mseq = CubeSequence.parabolic(d, max_stages)
        mi = maximal_inequality_check(cell_sum_process(cb), mseq, cb, max_env, alpha, seed ^ 0xA2, threads=threads)
        metrics["maximal"] = mi
        checks.append(_check("maximal inequality", mi["pass"], value=mi["p_exceed"], bound=mi["bound"],
                             slack=mi["slack"]))
    return ExperimentResult(rows, ["stage", "sides", "volume", "mean", "var", "stderr"], metrics, checks)


# --- regularity ------------------------------------------------------------------------------

def _field_1d(values_fn, h, L=1.0):
    dom = ParabolicDomain("cube", SpaceTimePoint((0.0,), 1.0), L, 1.0)
    g = GridSpec(dom, h, 0.25)
    X = g.coords()[..., 0]
    vals = np.stack([values_fn(X) for _ in range(g.n_time + 1)])
    return SpaceTimeField(g, vals)


def run_regularity(cfg: Config, seed: int, threads: int) -> ExperimentResult:
    es, d, n_env = _common(cfg)
    sec = "regularity"
    theta = cfg.float(sec, "theta", 0.05)
    h = cfg.float(sec, "h", 1.0 / 64)
    a = cfg.float(sec, "slope", 0.7)
    R = cfg.float(sec, "separation_scale", 3.0)
    theta_mass = cfg.float(sec, "theta_mass", 1e-3)
    op = cfg.operator()
    M = cfg.matrix(sec, "M", d)
    sep_ell = cfg.str(sec, "ell", "auto")
    rows, checks = [], []

    def add(name, ok, value, bound):
        rows.append({"check": name, "value": value, "bound": bound, "pass": bool(ok)})
        checks.append(_check(name, ok, value=value, bound=bound))

    # linear: ubar = a x + theta a^2 / 2 where the maximiser x + a theta stays inside
    u = _field_1d(lambda X: a * X, h)
    X = u.spec.coords()[..., 0]
    inner = (X + abs(a) * theta <= 1 - 1e-12) & (X - abs(a) * theta >= -1 + 1e-12)
    sup = sup_convolution_x(u, theta)
    err = float(np.abs(sup.values[:, inner] - (a * X + 0.5 * theta * a * a)[inner]).max())
    add("sup convolution linear", err <= h * h / theta, err, h * h / theta)
    inf = inf_convolution_x(u, theta)
    err = float(np.abs(inf.values[:, inner] - (a * X - 0.5 * theta * a * a)[inner]).max())
    add("inf convolution linear", err <= h * h / theta, err, h * h / theta)
    # quadratic: -x^2/2 -> -x^2/(2(1+theta)), maximiser x/(1+theta) always inside
    q = _field_1d(lambda X: -0.5 * X**2, h)
    sup = sup_convolution_x(q, theta)
    err = float(np.abs(sup.values - (-X**2 / (2 * (1 + theta)))).max())
    add("sup convolution quadratic", err <= h * h / theta, err, h * h / theta)
    q2 = _field_1d(lambda X: 0.5 * X**2, h)
    inf = inf_convolution_x(q2, theta)
    err = float(np.abs(inf.values - (X**2 / (2 * (1 + theta)))).max())
    add("inf convolution quadratic", err <= h * h / theta, err, h * h / theta)
    # tiny theta: identity
    small = 0.25 * h * h / (2 * 1.0)
    same = float(np.abs(sup_convolution_x(q, small).values - q.values).max())
    add("sup convolution identity for small theta", same == 0.0, same, 0.0)
    # semiconvexity on a convolved solver output
    dom = ParabolicDomain("cube", SpaceTimePoint((0.0,) * d, 1.0), 1.0)
    solve_op = op.with_shift(None)
    g = make_grid(solve_op, es, dom, 0.25, **_grid_kw(cfg))
    env = sample_env(es, child_seeds(seed, 1)[0])
    field = march(solve_op, env, g, 0.25, 0.0, _initial("sine", d), save=max(1, g.n_time // 8)).field
    sc, arg = sup_convolution_x(field, theta, return_argmax=True)
    rep = semiconvexity_check(sc, theta, "sup")
    add("semiconvexity of sup convolution", rep["pass"], rep["extreme_second_difference"], -rep["bound"])
    ic = inf_convolution_x(field, theta)
    rep = semiconvexity_check(ic, theta, "inf")
    add("semiconcavity of inf convolution", rep["pass"], rep["extreme_second_difference"], rep["bound"])
    md = maximizer_distance_check(field, theta, arg)
    add("maximiser distance", md["pass"], md["max_distance"], md["bound"])
    order = float(min((sc.values - field.values).min(), (field.values - ic.values).min()))
    add("convolution order", order >= 0, order, 0.0)
    saw = _field_1d(lambda X: np.where(np.arange(X.size) % 2 == 0, 0.0, 1.0), h)
    rep = semiconvexity_check(saw, theta, "sup")
    add("sawtooth negative control fails", not rep["pass"], rep["extreme_second_difference"], -rep["bound"])
    # separation of the two obstacle solutions
    if sep_ell == "auto":
        ell, _ = _fbar_auto(cfg, sec, op, es, M, seed, threads)
    else:
        ell = cfg.float(sec, "ell")
    sg = make_grid(op.with_shift(M), es, cube(R, d), 1.0, **_grid_kw(cfg))
    envs = [sample_env(es, s) for s in child_seeds(seed ^ 0x5E9, n_env)]
    asserted = 0
    for i, env in enumerate(envs):
        out = separation_check(op, env, ell, sg, 1.0, M, theta_mass)
        asserted += out["positivity_asserted"]
        ok = out["positive"] or not out["positivity_asserted"]
        add(f"separation env{i}", ok and out["min_h"] >= -1e-12, out["min_h_interior"], out["mass_product"])
    return ExperimentResult(rows, ["check", "value", "bound", "pass"], {"separation_asserted": asserted, "ell": ell},
                            checks)


RUNNERS = {
    "solve": run_solve,
    "corrector": run_corrector,
    "obstacle": run_obstacle,
    "effective": run_effective,
    "rate": run_rate,
    "moments": run_moments,
    "ergodic": run_ergodic,
    "regularity": run_regularity,
}
