"""Obstacle problems from above and below, contact sets and their weighted measures.

above: the smallest supersolution of v_t - F_M(D^2 v) = ell that stays >= 0
below: the largest subsolution that stays <= 0
both with zero data on the parabolic boundary. Discretely they are the
projected explicit march: step, then clip at zero. Contact is |v| <= tol; the
weighted mass uses (ell + F_M(0, .))^-(d+1) above and (...)^+(d+1) below.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .environment import EnvSample
from .errors import ConfigurationError
from .grid import GridSpec, ParabolicDomain, SpaceTimeField
from .operators import OperatorSpec, SymMatrix
from .solver import _env_coords, march, validate_grid

SIDES = ("above", "below")


@dataclass
class ObstacleSolution:
    v: SpaceTimeField
    side: str
    ell: float
    tol: float
    contact_measure: float
    mass: float

    @property
    def grid(self) -> GridSpec:
        return self.v.spec

    @property
    def fraction(self) -> float:
        return self.contact_measure / self.grid.measure()

    @property
    def contact_mask(self) -> np.ndarray:
        """Contact indicator on the stored levels (level 0 is never counted)."""
        m = np.abs(self.v.values) <= self.tol
        m &= self.grid.inside_mask()[None]
        m[self.v.levels == 0] = False
        return m


def default_contact_tol(op: OperatorSpec, env_spec, grid: GridSpec, M: Optional[SymMatrix] = None,
                        tol_factor: float = 10.0) -> float:
    _, up = op.eigen_constants(env_spec if op.modulated else None)
    mnorm = M.norm() if M is not None else 0.0
    return tol_factor * (grid.h**2 + grid.dt) * up * (1 + mnorm)


def _side_code(side: str):
    if side not in SIDES:
        raise ConfigurationError("side", f"must be 'above' or 'below', got {side!r}")
    return (1, -1.0) if side == "above" else (-1, 1.0)


def solve_obstacle(op: OperatorSpec, env: Optional[EnvSample], ell: float, eps: float, grid: GridSpec,
                   side: str, M: Optional[SymMatrix] = None, tol_factor: float = 10.0,
                   contact_tol: Optional[float] = None, save="auto", cfl: float = 0.9) -> ObstacleSolution:
    """Projected march for the obstacle problem on ``grid``.

    Contact statistics are accumulated over every time level inside the
    compiled loop, so they do not depend on how many levels are stored.
    """
    clip, sign = _side_code(side)
    opM = op.with_shift(M)
    env_spec = env.spec if env is not None else None
    validate_grid(opM, env_spec, grid, eps, cfl)
    tol = contact_tol if contact_tol is not None else default_contact_tol(op, env_spec, grid, M, tol_factor)
    if tol < 0:
        raise ConfigurationError("contact_tol", "must be nonnegative")
    track = {"tol": tol, "ell": float(ell), "f0h": opM.base_at_zero_discrete(grid.d), "side_sign": sign}
    res = march(opM, env, grid, eps, float(ell), None, clip=clip, save=save, track=track)
    mass = res.mass / grid.measure()
    return ObstacleSolution(res.field, side, float(ell), tol, res.contact_measure, mass)


def weight_field(op: OperatorSpec, env: Optional[EnvSample], ell: float, eps: float, grid: GridSpec, side: str,
                 M: Optional[SymMatrix] = None, levels=None) -> np.ndarray:
    """(ell + F_M(0, .))_{-/+}^(d+1) on the requested levels (numpy, independent of the kernel)."""
    _, sign = _side_code(side)
    opM = op.with_shift(M)
    f0 = opM.base_at_zero_discrete(grid.d)
    T = grid.times() if levels is None else grid.times()[levels]
    if opM.modulated:
        Y, ts = _env_coords(grid, eps)
        a = np.stack([env.eval(Y, t * ts) for t in T])
    else:
        a = np.ones((len(T),) + grid.space_shape)
    return np.clip(sign * (ell + a * f0), 0.0, None) ** (grid.d + 1)


def contact_stats(sol: ObstacleSolution, op: OperatorSpec, env: Optional[EnvSample], ell: float, eps: float,
                  M: Optional[SymMatrix] = None) -> dict:
    """measure, fraction and normalised mass of the contact set.

    With every level stored the numbers are recomputed from the field in
    numpy; otherwise the in-loop accumulators are reported.
    """
    g = sol.grid
    full = sol.v.levels.size == g.n_time + 1
    if full:
        mask = sol.contact_mask
        w = g.space_weights()
        meas = float(np.sum(mask * w[None])) * g.dt
        wf = weight_field(op, env, ell, eps, g, sol.side, M)
        mass = float(np.sum(mask * wf * w[None])) * g.dt / g.measure()
    else:
        meas, mass = sol.contact_measure, sol.mass
    return {"measure": meas, "fraction": meas / g.measure(), "mass": mass, "recomputed": full}


def _node_offset(a: float, b: float, step: float, what: str) -> int:
    k = (a - b) / step
    ki = int(round(k))
    if abs(k - ki) > 1e-9 * max(1.0, abs(k)):
        raise ConfigurationError(what, "nested domains are not aligned with the grid")
    return ki


def nesting_check(op: OperatorSpec, env: Optional[EnvSample], ell: float, eps: float, K1: ParabolicDomain,
                  K2: ParabolicDomain, h: float, dt: float, side: str = "above", M: Optional[SymMatrix] = None,
                  tol_factor: float = 10.0, contact_tol: Optional[float] = None) -> dict:
    """Contact sets of K1 inside K2.

    Comparison gives v_K2 >= v_K1 on K1 (above; reversed below), so contact of
    the big domain inside K1 must be contact of K1. When K1 shares its lateral
    boundary and bottom with K2 the two solutions coincide on K1 and the sets
    must agree exactly. Nodes with 0 < |v| <= 2 tol in either solution are
    reported as ambiguous and left out.
    """
    if K1.kind != "cube" or K2.kind != "cube" or K1.d != K2.d:
        raise ConfigurationError("domain", "nesting_check works on cubes of equal dimension")
    b1, b2 = K1.space_box, K2.space_box
    t1, t2 = K1.time_extent, K2.time_extent
    eps_g = 1e-12
    inside = all(a2 - eps_g <= a1 and c1 <= c2 + eps_g for (a1, c1), (a2, c2) in zip(b1, b2))
    inside &= t2[0] - eps_g <= t1[0] and t1[1] <= t2[1] + eps_g
    if not inside:
        raise ConfigurationError("domain", "K1 is not contained in K2")
    G1, G2 = GridSpec(K1, h, dt), GridSpec(K2, h, dt)
    offs = [_node_offset(a1, a2, h, "h") for (a1, _), (a2, _) in zip(b1, b2)]
    toff = _node_offset(t1[0], t2[0], dt, "dt")
    shared = all(o == 0 for o in offs) and toff == 0 and all(abs(c1 - c2) < eps_g for (_, c1), (_, c2) in zip(b1, b2))
    s1 = solve_obstacle(op, env, ell, eps, G1, side, M, tol_factor, contact_tol, save="all")
    tol = s1.tol
    s2 = solve_obstacle(op, env, ell, eps, G2, side, M, tol_factor, tol, save="all")
    sl = tuple(slice(o, o + G1.n_space + 1) for o in offs)
    v1 = s1.v.values
    v2 = s2.v.values[(slice(toff, toff + G1.n_time + 1),) + sl]
    c1 = np.abs(v1) <= tol
    c2 = np.abs(v2) <= tol
    interior = ~G1.boundary_mask()
    amb = ((np.abs(v1) > 0) & (np.abs(v1) <= 2 * tol)) | ((np.abs(v2) > 0) & (np.abs(v2) <= 2 * tol))
    considered = interior & ~amb
    violations = int(np.sum(considered & c2 & ~c1))
    mismatches = int(np.sum(considered & (c1 != c2))) if shared else violations
    order = v2 - v1 if side == "above" else v1 - v2
    return {
        "shared_boundary": bool(shared),
        "mismatches": mismatches,
        "inclusion_violations": violations,
        "ambiguous": int(np.sum(interior & amb)),
        "order_violation": float(max(0.0, -order.min())),
        "tol": tol,
        "pass": mismatches == 0 and violations == 0 and float(order.min()) >= -1e-12,
    }
