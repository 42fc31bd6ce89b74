"""Sup/inf convolutions in space, semiconvexity checks and the separation check
for the difference of the two obstacle solutions."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .environment import EnvSample
from .errors import ConfigurationError, InvariantViolation
from .grid import GridSpec, SpaceTimeField
from .obstacle import solve_obstacle
from .operators import OperatorSpec, SymMatrix


def _convolve(u: SpaceTimeField, theta: float, sign: int):
    if not theta > 0:
        raise ConfigurationError("theta", "must be positive")
    X = u.spec.coords().reshape(-1, u.spec.d)
    dist2 = np.sum((X[:, None, :] - X[None, :, :]) ** 2, axis=-1)
    pen = dist2 / (2 * theta)
    inside = u.spec.inside_mask().reshape(-1)
    pen[:, ~inside] = np.inf
    out = np.empty_like(u.values)
    arg = np.empty(u.values.shape, dtype=np.int64)
    for k in range(u.values.shape[0]):
        v = u.values[k].reshape(-1)
        if sign > 0:
            cand = v[None, :] - pen
            j = np.argmax(cand, axis=1)
        else:
            cand = v[None, :] + pen
            j = np.argmin(cand, axis=1)
        out[k] = cand[np.arange(v.size), j].reshape(u.spec.space_shape)
        arg[k] = j.reshape(u.spec.space_shape)
    # outside the d=2 ball: keep the raw values
    if not inside.all():
        mask = ~u.spec.inside_mask()
        out[:, mask] = u.values[:, mask]
    return SpaceTimeField(u.spec, out, u.levels.copy()), arg


def sup_convolution_x(u: SpaceTimeField, theta: float, return_argmax: bool = False):
    """max over nodes y of u(y, t) - |x - y|^2 / (2 theta), slice by slice."""
    f, arg = _convolve(u, theta, +1)
    return (f, arg) if return_argmax else f


def inf_convolution_x(u: SpaceTimeField, theta: float, return_argmin: bool = False):
    f, arg = _convolve(u, theta, -1)
    return (f, arg) if return_argmin else f


def _second_differences(vals: np.ndarray, d: int, h: float) -> np.ndarray:
    """Directional second differences along axes (and diagonals in d=2), normalised by |e|^2 h^2."""
    out = []
    if d == 1:
        out.append((vals[:, 2:] + vals[:, :-2] - 2 * vals[:, 1:-1]) / h**2)
    else:
        c = vals[:, 1:-1, 1:-1]
        out.append((vals[:, 2:, 1:-1] + vals[:, :-2, 1:-1] - 2 * c) / h**2)
        out.append((vals[:, 1:-1, 2:] + vals[:, 1:-1, :-2] - 2 * c) / h**2)
        out.append((vals[:, 2:, 2:] + vals[:, :-2, :-2] - 2 * c) / (2 * h**2))
        out.append((vals[:, 2:, :-2] + vals[:, :-2, 2:] - 2 * c) / (2 * h**2))
    return np.stack(out)


def semiconvexity_check(u: SpaceTimeField, theta: float, kind: str = "sup") -> dict:
    """D^2_h >= -(1/theta)(1 + h^2/theta) (sup) or <= +(...) (inf) at interior nodes."""
    if not theta > 0:
        raise ConfigurationError("theta", "must be positive")
    if kind not in ("sup", "inf"):
        raise ConfigurationError("kind", "must be 'sup' or 'inf'")
    h = u.spec.h
    bound = (1.0 / theta) * (1.0 + h * h / theta)
    D = _second_differences(u.values, u.spec.d, h)
    if u.spec.d == 2 and not u.spec.inside_mask().all():
        interior = u.spec.inside_mask() & ~u.spec.lateral_mask()
        D = np.where(interior[1:-1, 1:-1][None, None], D, 0.0)
    if kind == "sup":
        worst = float(D.min())
        ok = worst >= -bound
    else:
        worst = float(D.max())
        ok = worst <= bound
    return {"extreme_second_difference": worst, "bound": bound, "pass": bool(ok)}


def lipschitz_estimate(u: SpaceTimeField) -> float:
    """Largest nearest-neighbour difference quotient in space over all stored slices."""
    h = u.spec.h
    best = 0.0
    for ax in range(u.spec.d):
        dq = np.abs(np.diff(u.values, axis=ax + 1)) / h
        best = max(best, float(dq.max()))
    return best


def maximizer_distance_check(u: SpaceTimeField, theta: float, arg: np.ndarray) -> dict:
    """|x - x*| <= 2 theta Lip(u) (+ h for the grid) at every node."""
    X = u.spec.coords().reshape(-1, u.spec.d)
    flat = arg.reshape(arg.shape[0], -1)
    dist = np.sqrt(np.sum((X[None, :, :] - X[flat]) ** 2, axis=-1))
    lip = lipschitz_estimate(u)
    bound = 2 * theta * lip * math.sqrt(u.spec.d) + u.spec.h
    return {"max_distance": float(dist.max()), "bound": bound, "pass": bool(dist.max() <= bound + 1e-12)}


def separation_check(op: OperatorSpec, env: Optional[EnvSample], ell: float, grid: GridSpec, eps: float = 1.0,
                     M: Optional[SymMatrix] = None, theta_mass: float = 1e-3, tol_factor: float = 0.0) -> dict:
    """h = v_above - v_below >= 0 everywhere; minimum over the interior region
    |y - y0| <= 2R/3, s >= top - (2/3) R^2; positivity required when the mass
    product is at least theta_mass."""
    up = solve_obstacle(op, env, ell, eps, grid, "above", M, tol_factor, save="all")
    lo = solve_obstacle(op, env, ell, eps, grid, "below", M, tol_factor, save="all")
    h = up.v.values - lo.v.values
    hmin_all = float(h.min())
    if hmin_all < -1e-12:
        raise InvariantViolation(f"v_above - v_below = {hmin_all} < 0")
    R = grid.domain.r
    top = grid.domain.time_extent[1]
    X = grid.coords() - np.asarray(grid.domain.center.x)
    rad = np.sqrt(np.sum(X**2, axis=-1))
    region = (rad <= (2.0 / 3.0) * R + 1e-12)[None] & (up.v.times >= top - (2.0 / 3.0) * R * R - 1e-12).reshape(
        (-1,) + (1,) * grid.d)
    region = region & ~grid.boundary_mask()
    hmin = float(h[region].min())
    prod = up.mass * lo.mass
    asserted = prod >= theta_mass
    if asserted and not hmin > 0:
        raise InvariantViolation(f"mass product {prod:.3g} >= {theta_mass} but interior min of h is {hmin}")
    return {"min_h_interior": hmin, "min_h": hmin_all, "positive": bool(hmin > 0), "mass_above": up.mass,
            "mass_below": lo.mass, "mass_product": prod, "positivity_asserted": bool(asserted)}
