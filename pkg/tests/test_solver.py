import numpy as np
import pytest

from parahom.environment import EnvSpec, sample_env
from parahom.errors import ConfigurationError, InvariantViolation
from parahom.grid import GridSpec, SpaceTimeField, cube
from parahom.operators import OperatorSpec, SymMatrix
from parahom.solver import (SolveConfig, abp_ratio, cfl_limit, comparison_check, make_grid, march, reference_march,
                            solve_corrector, solve_effective, solve_parabolic, effective_grid)

HEAT = OperatorSpec("linear_trace")


def _sine(X, t):
    return np.sin(np.pi * (X[..., 0] + 1) / 2) * (t <= -1 + 1e-12)


def test_heat_mode_decay(oracles):
    g = make_grid(HEAT, None, cube(1.0), h=1 / 128)
    u = solve_parabolic(HEAT, None, SolveConfig(boundary_data=_sine, save="final"), g)
    X = g.coords()
    mid = np.argmin(np.abs(X[..., 0]))
    assert u.final()[mid] == pytest.approx(oracles["heat_decay_unit"], abs=1e-2)
    # the whole profile, not just the midpoint
    exact = oracles["heat_decay_unit"] * np.sin(np.pi * (X[..., 0] + 1) / 2)
    assert np.max(np.abs(u.final() - exact)) < 1e-2


@pytest.mark.parametrize("kind", ["linear_trace", "pucci_plus", "pucci_minus"])
@pytest.mark.parametrize("d", [1, 2])
def test_constants_and_linear_data_preserved(kind, d):
    op = OperatorSpec(kind, 1.0, 2.0)
    g = make_grid(op, None, cube(1.0, d), h=1 / 8)
    for data in (lambda X, t: 0 * X[..., 0] + 3.5, lambda X, t: 2 * X[..., 0] - X[..., -1] + 1):
        u = solve_parabolic(op, None, SolveConfig(boundary_data=data, save="all"), g)
        target = data(g.coords(), 0.0)
        assert np.max(np.abs(u.values - target)) < 1e-12


@pytest.mark.parametrize("kind,d", [("pucci_minus", 1), ("pucci_plus", 2), ("scalar_modulated", 1)])
def test_numba_matches_reference(kind, d):
    op = OperatorSpec(kind, 1.0, 2.0, "pucci_plus" if kind == "scalar_modulated" else None)
    spec = EnvSpec.checkerboard(1.0, 2.0, 0.5, d=d) if op.modulated else None
    env = sample_env(spec, 5) if spec is not None else None
    g = make_grid(op, spec, cube(1.0, d), eps=0.5 if spec else 0.0, h=1 / 16)

    def data(X, t):
        return np.cos(X[..., 0]) * (1 + t) + 0.3 * X[..., -1] ** 2

    def f(X, t):
        return np.sin(3 * X[..., 0])

    eps = 0.5 if spec else 0.0
    fast = march(op, env, g, eps, f, data, save="all").field.values
    ref = reference_march(op, env, g, eps, f, data)
    assert np.max(np.abs(fast - ref)) < 1e-12


def test_cfl_violation_names_dt():
    g = GridSpec(cube(1.0), 1 / 8, 1 / 64)
    assert g.dt > cfl_limit(HEAT, None, 1, g.h, 0.9)
    with pytest.raises(ConfigurationError) as ei:
        solve_parabolic(HEAT, None, SolveConfig(), g)
    assert ei.value.key == "dt"
    with pytest.raises(ConfigurationError) as ei:
        solve_parabolic(HEAT, None, SolveConfig(cfl=1.5), g)
    assert ei.value.key == "cfl"


def test_comparison_principle_random_pairs():
    op = OperatorSpec("pucci_minus", 1.0, 2.0)
    g = make_grid(op, None, cube(0.5), h=1 / 16)
    res = comparison_check(op, None, g, pairs=6, seed=3)
    assert res["pass"] and res["max_violation"] <= 1e-12


def test_shift_by_constant():
    op = OperatorSpec("pucci_plus", 1.0, 3.0)
    g = make_grid(op, None, cube(1.0), h=1 / 16)

    def data(X, t):
        return np.sin(2 * X[..., 0]) + t

    u1 = solve_parabolic(op, None, SolveConfig(boundary_data=data, save="all"), g).values
    u2 = solve_parabolic(op, None, SolveConfig(boundary_data=lambda X, t: data(X, t) + 0.7, save="all"), g).values
    assert np.allclose(u2 - u1, 0.7, atol=1e-12)


def test_corrector_zero_at_exact_level_and_monotone_in_ell():
    spec = EnvSpec.constant(1.0)
    env = sample_env(spec, 0)
    op = OperatorSpec("linear_trace")
    M = SymMatrix.scalar(1.5)
    g = make_grid(op, spec, cube(1.0), h=1 / 16)
    w0 = solve_corrector(op, env, M, -1.5, 1.0, g).values
    assert np.max(np.abs(w0)) < 1e-12
    lo = solve_corrector(op, env, M, -1.6, 1.0, g).values
    hi = solve_corrector(op, env, M, -1.4, 1.0, g).values
    assert np.all(lo <= w0 + 1e-14) and np.all(w0 <= hi + 1e-14)
    assert hi.max() > 0 > lo.min()


def test_effective_linear_table_is_heat(oracles):
    table = (np.array([-4.0, 4.0]), np.array([-4.0, 4.0]))
    g = effective_grid(table, cube(1.0), 1 / 64)
    u = solve_effective(table, g, boundary_data=_sine, save="final")
    v = solve_parabolic(HEAT, None, SolveConfig(boundary_data=_sine, save="final"), g)
    assert np.max(np.abs(u.final() - v.final())) < 1e-12
    mid = np.argmin(np.abs(g.coords()[..., 0]))
    assert u.final()[mid] == pytest.approx(oracles["heat_decay_unit"], abs=1e-2)


def test_effective_refuses_bad_tables():
    g = GridSpec(cube(1.0), 1 / 8, 1 / 256)
    with pytest.raises(InvariantViolation):
        solve_effective((np.array([-1.0, 0.0, 1.0]), np.array([0.0, 1.0, 0.5])), g)
    with pytest.raises(ConfigurationError):
        solve_effective((np.array([0.0, 0.0]), np.array([0.0, 1.0])), g)
    g2 = GridSpec(cube(1.0, 2), 1 / 8, 1 / 256)
    with pytest.raises(ConfigurationError):
        solve_effective((np.array([-1.0, 1.0]), np.array([-1.0, 1.0])), g2)


def test_abp_ratio():
    g = GridSpec(cube(1.0), 1 / 4, 1 / 16)
    n = g.n_time + 1
    zero = SpaceTimeField(g, np.zeros((n,) + g.space_shape))
    assert abp_ratio(zero, SpaceTimeField(g, -np.ones((n,) + g.space_shape))) == 0.0
    bad = zero.values.copy()
    bad[0] = -1.0
    with pytest.raises(ValueError):
        abp_ratio(SpaceTimeField(g, bad), zero)
    # heat solution of u_t - u_xx = -1 with zero data is negative inside
    u = solve_parabolic(HEAT, None, SolveConfig(rhs=-1.0, save="all"), make_grid(HEAT, None, cube(1.0), h=1 / 16))
    forcing = SpaceTimeField(u.spec, -np.ones_like(u.values), u.levels)
    r = abp_ratio(u, forcing)
    assert 0 < r < np.inf
