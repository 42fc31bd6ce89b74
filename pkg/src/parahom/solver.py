"""Explicit monotone finite-difference solver for u_t - F(D^2 u, x/eps, t/eps^2) = f.

Scheme: forward Euler in time, centred second differences in space (axes and
the two diagonals in d=2). Monotone under dt <= cfl * h^2 / (2 d Lambda) with
Lambda the per-eigenvalue upper constant of the operator (modulation included).
The discrete scheme satisfies the comparison principle, which is what the
obstacle and homogenization code relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import _kernels
from .environment import EnvSample, EnvSpec
from .errors import ConfigurationError, InvariantViolation, SolveError
from .grid import GridSpec, ParabolicDomain, SpaceTimeField
from .operators import OperatorSpec, SymMatrix, base_from_directional

# floats per chunk of coefficient rows, and per stored snapshot block
_CHUNK_FLOATS = 4_000_000
_STORE_FLOATS = 20_000_000


@dataclass
class SolveConfig:
    """Numerical parameters of one march.

    rhs: constant or callable f(X, t) -> array over the spatial grid.
    boundary_data: callable g(X, t) giving the bottom slice and lateral values
    (zero when omitted). save: "auto", "all", "final" or a stride.
    """

    eps: float = 0.0
    cfl: float = 0.9
    rhs: Union[float, Callable] = 0.0
    boundary_data: Optional[Callable] = None
    save: Union[str, int] = "auto"
    nodes_per_cell: int = 8
    check_resolution: bool = True


@dataclass
class MarchResult:
    field: SpaceTimeField
    contact_measure: float = 0.0
    mass: float = 0.0
    tol: float = 0.0


def cfl_limit(op: OperatorSpec, env_spec: Optional[EnvSpec], d: int, h: float, cfl: float = 1.0) -> float:
    _, up = op.eigen_constants(env_spec if op.modulated else None)
    return cfl * h * h / (2 * d * up)


def _table_cfl(table_x, table_y, h, cfl):
    slopes = np.diff(table_y) / np.diff(table_x)
    return cfl * h * h / (2 * max(float(slopes.max()), 1e-300))


def cell_sizes(env_spec: Optional[EnvSpec], eps: float):
    """Physical (space, time) cell sizes of the coefficient field, or None."""
    if env_spec is None or not env_spec.has_cells:
        return None
    sx, st = env_spec.cell_x, env_spec.cell_t
    if eps and eps > 0:
        return sx * eps, st * eps * eps
    return sx, st


def validate_grid(op: OperatorSpec, env_spec: Optional[EnvSpec], grid: GridSpec, eps: float = 0.0,
                  cfl: float = 0.9, nodes_per_cell: int = 8, check_resolution: bool = True):
    """Raise ConfigurationError naming ``h`` or ``dt`` when the grid is unusable."""
    if not 0 < cfl <= 1:
        raise ConfigurationError("cfl", f"must lie in (0, 1], got {cfl}")
    lim = cfl_limit(op, env_spec, grid.d, grid.h, cfl)
    if grid.dt > lim * (1 + 1e-12):
        raise ConfigurationError("dt", f"dt={grid.dt:.6g} violates the CFL bound {lim:.6g}")
    cells = cell_sizes(env_spec if op.modulated else None, eps)
    if check_resolution and cells is not None:
        sx, st = cells
        if grid.h > sx / nodes_per_cell * (1 + 1e-12):
            raise ConfigurationError("h", f"h={grid.h:.6g} does not resolve the cell size {sx:.6g} "
                                          f"with {nodes_per_cell} nodes per cell")
        if grid.dt > st / nodes_per_cell * (1 + 1e-12):
            raise ConfigurationError("dt", f"dt={grid.dt:.6g} does not resolve the time cell {st:.6g}")


def make_grid(op: OperatorSpec, env_spec: Optional[EnvSpec], domain: ParabolicDomain, eps: float = 0.0,
              h: Optional[float] = None, dt: Optional[float] = None, cfl: float = 0.9,
              nodes_per_cell: int = 8, time_align: int = 1, min_nodes: int = 16) -> GridSpec:
    """Grid resolving the coefficient cells and satisfying the CFL bound.

    An explicit ``dt`` is used as given (and validated); otherwise the largest
    admissible step is chosen.
    """
    cells = cell_sizes(env_spec if op.modulated else None, eps)
    if h is None:
        h = 2 * domain.r / min_nodes
        if cells is not None:
            h = min(h, cells[0] / nodes_per_cell)
        # snap to a divisor of the width
        n = math.ceil(2 * domain.r / h - 1e-9)
        h = 2 * domain.r / n
    try:
        if dt is None:
            dt_max = cfl_limit(op, env_spec, domain.d, h, cfl)
            if cells is not None:
                dt_max = min(dt_max, cells[1] / nodes_per_cell)
            grid = GridSpec.build(domain, h, dt_max, time_align)
        else:
            grid = GridSpec(domain, h, dt)
    except ValueError as exc:
        key = "dt" if "dt" in str(exc) else "h"
        raise ConfigurationError(key, str(exc)) from None
    validate_grid(op, env_spec, grid, eps, cfl, nodes_per_cell)
    return grid


def _env_coords(grid: GridSpec, eps: float):
    X = grid.coords()
    if eps and eps > 0:
        return X / eps, 1.0 / (eps * eps)
    return X, 1.0


class _CoefSource:
    """Per-level coefficient rows, deduplicated by time cell where possible."""

    def __init__(self, op, env, grid, eps):
        self.grid = grid
        self.shape = grid.space_shape
        self.env = env if op.modulated else None
        if op.modulated and env is None:
            raise ValueError("modulated operator needs an environment sample")
        self.Y, self.tscale = _env_coords(grid, eps)
        self.times = grid.times()

    def rows(self, n0, n1):
        m = n1 - n0
        if self.env is None:
            return np.ones((1,) + self.shape), np.zeros(m, dtype=np.int64)
        S = self.times[n0:n1] * self.tscale
        keys = self.env.time_keys(S)
        if keys is None:
            rows = np.stack([self.env.eval(self.Y, s) for s in S])
            return rows, np.arange(m, dtype=np.int64)
        uniq, first, inv = np.unique(keys, return_index=True, return_inverse=True)
        rows = np.stack([self.env.eval(self.Y, S[i]) for i in first])
        return rows, inv.astype(np.int64).reshape(-1)


def _src_rows(rhs, grid, n0, n1):
    m = n1 - n0
    if callable(rhs):
        X = grid.coords()
        T = grid.times()[n0:n1]
        rows = np.stack([np.broadcast_to(np.asarray(rhs(X, t), dtype=float), grid.space_shape) for t in T])
        return rows, np.arange(m, dtype=np.int64)
    return np.full((1,) + grid.space_shape, float(rhs)), np.zeros(m, dtype=np.int64)


def _save_levels(save, n_total, n_nodes, extra=()):
    if save == "all":
        lv = np.arange(n_total + 1)
    elif save == "final":
        lv = np.array([0, n_total])
    else:
        if save == "auto":
            cap = max(2, _STORE_FLOATS // max(n_nodes, 1))
            stride = max(1, math.ceil((n_total + 1) / cap))
        else:
            stride = int(save)
            if stride < 1:
                raise ConfigurationError("save", "stride must be >= 1")
        lv = np.arange(0, n_total + 1, stride)
    lv = np.union1d(lv, np.asarray([0, n_total] + list(extra), dtype=np.int64))
    return lv.astype(np.int64)


def march(op: OperatorSpec, env: Optional[EnvSample], grid: GridSpec, eps: float = 0.0,
          rhs: Union[float, Callable] = 0.0, boundary_data: Optional[Callable] = None,
          clip: int = 0, save="auto", extra_levels=(), track: Optional[dict] = None,
          table: Optional[tuple] = None) -> MarchResult:
    """Run the explicit scheme over the whole grid.

    clip=+1 projects onto {u >= 0} after every step, clip=-1 onto {u <= 0}.
    ``track`` (tol, ell, f0h, side_sign) switches on in-loop contact statistics.
    ``table`` = (xs, ys) replaces the operator by a tabulated 1-D function.
    """
    d = grid.d
    n_total = grid.n_time
    shape = grid.space_shape
    n_nodes = int(np.prod(shape))
    X = grid.coords()
    times = grid.times()
    t0 = times[0]
    if boundary_data is not None:
        u = np.array(np.broadcast_to(np.asarray(boundary_data(X, t0), dtype=float), shape))
    else:
        u = np.zeros(shape)
    if not np.all(np.isfinite(u)):
        raise ConfigurationError("boundary_data", "initial data is not finite")
    lat = grid.lateral_mask()
    lat_idx = np.nonzero(lat)
    levels = _save_levels(save, n_total, n_nodes, extra_levels)
    saves = np.zeros((levels.size,) + shape)
    save_pos = np.zeros(1, dtype=np.int64)
    acc = np.zeros(2)
    code = op.code
    sdir = np.ascontiguousarray(op.shift_directional(d), dtype=float)
    if table is not None:
        if d != 1:
            raise ConfigurationError("d", "tabulated operators are only supported in d=1")
        code = 3
        tab_x, tab_y = (np.ascontiguousarray(a, dtype=float) for a in table)
    else:
        tab_x = tab_y = np.zeros(2)
    if track is not None:
        tol = float(track["tol"])
        ell = float(track["ell"])
        f0h = float(track["f0h"])
        side_sign = float(track["side_sign"])
        wx = grid.space_weights()
        do_track = True
    else:
        tol = ell = f0h = side_sign = 0.0
        wx = np.zeros(shape)
        do_track = False
    power = float(d + 1)
    coefs = _CoefSource(op, env, grid, eps)
    chunk = max(8, min(n_total + 1, _CHUNK_FLOATS // max(n_nodes, 1)))
    fixed = lat | ~grid.inside_mask() if d == 2 else None
    if d == 2:
        li, lj = (np.ascontiguousarray(a, dtype=np.int64) for a in np.nonzero(fixed))
    for n0 in range(0, n_total + 1, chunk):
        n1 = min(n0 + chunk, n_total + 1)
        coef_rows, coef_idx = coefs.rows(n0, n1)
        src_rows, src_idx = _src_rows(rhs, grid, n0, n1)
        # lateral values for levels n0 .. n1 (the step out of n1-1 lands on n1)
        m = n1 - n0 + 1
        if d == 1:
            bv = np.zeros((m, 2))
        else:
            bv = np.zeros((m, li.size))
        if boundary_data is not None:
            for k in range(m):
                lev = min(n0 + k, n_total)
                g = np.broadcast_to(np.asarray(boundary_data(X, times[lev]), dtype=float), shape)
                bv[k] = (g[0], g[-1]) if d == 1 else g[li, lj]
            if not np.all(np.isfinite(bv)):
                raise ConfigurationError("boundary_data", "lateral data is not finite")
        if d == 1:
            status = _kernels.march_1d(u, n0, n1, n_total, grid.dt, grid.h, code, op.lam, op.Lam, sdir,
                                       coef_rows, coef_idx, src_rows, src_idx, bv, clip,
                                       tab_x, tab_y, levels, saves, save_pos,
                                       do_track, tol, wx, ell, f0h, side_sign, power, acc)
        else:
            status = _kernels.march_2d(u, fixed, li, lj, n0, n1, n_total, grid.dt, grid.h, code, op.lam,
                                       op.Lam, sdir, coef_rows, coef_idx, src_rows, src_idx, bv, clip,
                                       levels, saves, save_pos,
                                       do_track, tol, wx, ell, f0h, side_sign, power, acc)
        if status <= -2:
            raise ConfigurationError("table", f"second difference left the tabulated range at step {-status - 2}")
        if status >= 0:
            raise SolveError(int(status))
    fieldv = SpaceTimeField(grid, saves, levels)
    return MarchResult(fieldv, float(acc[0]), float(acc[1]), tol)


def solve_parabolic(op: OperatorSpec, env: Optional[EnvSample], cfg: SolveConfig, grid: GridSpec) -> SpaceTimeField:
    """Solve u_t - F(D^2u, x/eps, t/eps^2) = f with Dirichlet data on the parabolic boundary."""
    validate_grid(op, env.spec if env is not None else None, grid, cfg.eps, cfg.cfl, cfg.nodes_per_cell,
                  cfg.check_resolution)
    res = march(op, env, grid, cfg.eps, cfg.rhs, cfg.boundary_data, clip=0, save=cfg.save)
    return res.field


def solve_corrector(op: OperatorSpec, env: EnvSample, M: SymMatrix, ell: float, eps: float, grid: GridSpec,
                    cfl: float = 0.9, save="auto") -> SpaceTimeField:
    """w_t - F_M(D^2 w, x/eps, t/eps^2) = ell with zero data on the parabolic boundary."""
    opM = op.with_shift(M)
    validate_grid(opM, env.spec if env is not None else None, grid, eps, cfl)
    return march(opM, env, grid, eps, float(ell), None, clip=0, save=save).field


def solve_effective(table, grid: GridSpec, boundary_data: Optional[Callable] = None, rhs=0.0,
                    cfl: float = 0.9, save="auto") -> SpaceTimeField:
    """u_t - Fbar(u_xx) = f for a tabulated effective operator (d=1).

    ``table`` is an EffectiveTable or (xs, ys) with xs increasing and ys nondecreasing;
    values between nodes are linearly interpolated, outside the table the
    solve is refused.
    """
    if grid.d != 1:
        raise ConfigurationError("d", "the effective solver supports d=1")
    xs, ys = table.as_arrays() if hasattr(table, "as_arrays") else table
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.size < 2 or np.any(np.diff(xs) <= 0):
        raise ConfigurationError("table", "abscissae must be strictly increasing")
    if np.any(np.diff(ys) < 0):
        raise InvariantViolation("tabulated operator is not monotone")
    lim = _table_cfl(xs, ys, grid.h, cfl)
    if grid.dt > lim * (1 + 1e-12):
        raise ConfigurationError("dt", f"dt={grid.dt:.6g} violates the CFL bound {lim:.6g}")
    dummy = OperatorSpec("linear_trace")
    return march(dummy, None, grid, 0.0, rhs, boundary_data, clip=0, save=save, table=(xs, ys)).field


def effective_grid(table, domain: ParabolicDomain, h: float, cfl: float = 0.9, time_align: int = 1) -> GridSpec:
    xs, ys = table.as_arrays() if hasattr(table, "as_arrays") else table
    return GridSpec.build(domain, h, _table_cfl(np.asarray(xs), np.asarray(ys), h, cfl), time_align)


# --- independent numpy reference pieces -------------------------------------------------------

def directional_differences(u: np.ndarray, h: float) -> np.ndarray:
    """Second differences along the stencil directions at interior nodes (NaN elsewhere)."""
    if u.ndim == 1:
        D = np.full(u.shape + (1,), np.nan)
        D[1:-1, 0] = (u[2:] + u[:-2] - 2 * u[1:-1]) / h**2
        return D
    D = np.full(u.shape + (4,), np.nan)
    c = u[1:-1, 1:-1]
    D[1:-1, 1:-1, 0] = (u[2:, 1:-1] + u[:-2, 1:-1] - 2 * c) / h**2
    D[1:-1, 1:-1, 1] = (u[1:-1, 2:] + u[1:-1, :-2] - 2 * c) / h**2
    D[1:-1, 1:-1, 2] = (u[2:, 2:] + u[:-2, :-2] - 2 * c) / (2 * h**2)
    D[1:-1, 1:-1, 3] = (u[2:, :-2] + u[:-2, 2:] - 2 * c) / (2 * h**2)
    return D


def apply_operator(op: OperatorSpec, u: np.ndarray, h: float, coef=1.0) -> np.ndarray:
    """Discrete F_h(u) at interior nodes, vectorised numpy (reference implementation)."""
    D = directional_differences(u, h) + op.shift_directional(u.ndim)
    return np.asarray(coef) * base_from_directional(op.base_kind, D, op.lam, op.Lam)


def reference_march(op, env, grid, eps=0.0, rhs=0.0, boundary_data=None, clip=0) -> np.ndarray:
    """Plain numpy time loop returning every level; for cross-checking small grids."""
    X = grid.coords()
    T = grid.times()
    Y, ts = _env_coords(grid, eps)
    u = np.zeros(grid.shape)
    g0 = boundary_data(X, T[0]) if boundary_data is not None else 0.0
    u[0] = g0
    fixed = grid.lateral_mask() | ~grid.inside_mask()
    for n in range(grid.n_time):
        a = env.eval(Y, T[n] * ts) if op.modulated else 1.0
        f = rhs(X, T[n]) if callable(rhs) else rhs
        step = u[n] + grid.dt * (apply_operator(op, u[n], grid.h, a) + f)
        if clip == 1:
            step = np.maximum(step, 0.0)
        elif clip == -1:
            step = np.minimum(step, 0.0)
        g = boundary_data(X, T[n + 1]) if boundary_data is not None else np.zeros(grid.space_shape)
        u[n + 1] = np.where(fixed, g, step)
    return u


def comparison_check(op: OperatorSpec, env: Optional[EnvSample], grid: GridSpec, pairs: int, seed: int = 0,
                     eps: float = 0.0, threads: Optional[int] = None) -> dict:
    """Solve random ordered pairs (g1 <= g2, f1 <= f2) and report max(u1 - u2)."""
    from .parallel import ensemble_map

    rng = np.random.default_rng(seed)
    lo, hi = grid.domain.space_box[0]
    L = hi - lo
    # draw every pair up front so the result does not depend on scheduling
    draws = [(rng.integers(1, 4, size=3), rng.normal(size=6), np.abs(rng.normal(size=3))) for _ in range(pairs)]

    def one(draw):
        k, c, shift = draw

        def g1(X, t):
            x = (X[..., 0] - lo) / L
            return c[0] * np.sin(np.pi * k[0] * x) + c[1] * np.cos(np.pi * k[1] * x + t) + c[2] * t

        def g2(X, t):
            x = (X[..., 0] - lo) / L
            return g1(X, t) + shift[0] + shift[1] * np.sin(np.pi * k[2] * x) ** 2

        def f1(X, t):
            x = (X[..., 0] - lo) / L
            return c[3] * np.cos(2 * np.pi * x) + c[4]

        def f2(X, t):
            return f1(X, t) + shift[2]

        u1 = march(op, env, grid, eps, f1, g1, save="all").field.values
        u2 = march(op, env, grid, eps, f2, g2, save="all").field.values
        return float(np.max(u1 - u2))

    worst = max(ensemble_map(one, draws, threads)) if pairs else -np.inf
    return {"max_violation": worst, "pairs": pairs, "pass": bool(worst <= 1e-10)}


def abp_ratio(u: SpaceTimeField, g: SpaceTimeField) -> float:
    """sup u^- / (int (g^-)^(d+1))^(1/(d+1)) for a supersolution-type pair.

    Requires u >= 0 on the parabolic boundary; ``g`` is the forcing on the same
    grid and levels (integrated with the grid quadrature over levels >= 1).
    """
    d = u.spec.d
    bmask = u.boundary_mask
    if np.any(u.values[bmask] < -1e-12):
        raise ValueError("u must be nonnegative on the parabolic boundary")
    if g.values.shape != u.values.shape:
        raise ValueError("u and g must live on the same stored levels")
    w = u.spec.space_weights()
    neg = np.clip(-g.values, 0.0, None) ** (d + 1)
    keep = u.levels >= 1
    # each stored level stands for the levels since the previous one
    lev = u.levels
    widths = np.diff(np.concatenate([[0], lev]))[keep] * u.spec.dt
    integral = float(np.sum(widths[:, None] * (neg[keep].reshape(keep.sum(), -1) * w.reshape(1, -1))))
    sup_neg = float(np.max(np.clip(-u.values, 0.0, None)))
    if integral <= 0:
        return 0.0 if sup_neg == 0 else np.inf
    return sup_neg / integral ** (1.0 / (d + 1))
