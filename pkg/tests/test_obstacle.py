import numpy as np
import pytest

from parahom.environment import EnvSpec, sample_env
from parahom.errors import ConfigurationError
from parahom.grid import box, cube
from parahom.obstacle import contact_stats, nesting_check, solve_obstacle, weight_field
from parahom.operators import OperatorSpec, SymMatrix
from parahom.solver import SolveConfig, make_grid, solve_corrector

OP = OperatorSpec("pucci_minus", 1.0, 2.0)


def _grid(d=1, r=1.0, h=1 / 16, op=OP, spec=None, eps=0.0):
    return make_grid(op, spec, cube(r, d), eps=eps, h=h)


def test_full_contact_when_level_favours_zero():
    # ell <= -F(0) = 0: zero is a supersolution, so the obstacle from above sits on it
    g = _grid()
    sol = solve_obstacle(OP, None, -0.5, 0.0, g, "above", save="all")
    assert np.all(sol.v.values == 0)
    assert sol.fraction == pytest.approx(1.0)
    st = contact_stats(sol, OP, None, -0.5, 0.0)
    # weight (ell + F(0))^- = 1/2 squared on every node
    assert st["mass"] == pytest.approx(0.25 * st["fraction"], rel=1e-12)
    assert sol.mass == pytest.approx(st["mass"], rel=1e-12)
    below = solve_obstacle(OP, None, 0.5, 0.0, g, "below", save="all")
    assert np.all(below.v.values == 0) and below.fraction == pytest.approx(1.0)


def test_mass_quadrature_constant_weight():
    # above with ell = -1 and M = 0: weight is 1 everywhere
    g = _grid()
    sol = solve_obstacle(OP, None, -1.0, 0.0, g, "above", save="all")
    st = contact_stats(sol, OP, None, -1.0, 0.0)
    assert st["recomputed"]
    assert st["mass"] == pytest.approx(st["fraction"], rel=1e-12)
    # in-loop accumulators agree with the numpy recomputation
    assert sol.contact_measure == pytest.approx(st["measure"], rel=1e-12)
    assert sol.mass == pytest.approx(st["mass"], rel=1e-12)
    w = weight_field(OP, None, -1.0, 0.0, g, "above")
    assert np.allclose(w, 1.0)


def test_empty_interior_contact_far_from_level():
    g = _grid()
    sol = solve_obstacle(OP, None, 20.0, 0.0, g, "above", save="all", contact_tol=0.0)
    interior = sol.contact_mask & ~g.lateral_mask()[None]
    assert not interior.any()
    assert np.all(sol.v.values >= 0)


def test_obstacles_bracket_the_corrector():
    spec = EnvSpec.checkerboard(1.0, 2.0, 0.5)
    env = sample_env(spec, 11)
    op = OperatorSpec("scalar_modulated", 1.0, 2.0, "pucci_minus")
    M = SymMatrix.scalar(1.0)
    g = _grid(op=op, spec=spec, eps=1.0, h=1 / 16)
    for ell in (-1.8, -1.4, -1.0):
        w = solve_corrector(op, env, M, ell, 1.0, g, save="all").values
        up = solve_obstacle(op, env, ell, 1.0, g, "above", M, save="all").v.values
        lo = solve_obstacle(op, env, ell, 1.0, g, "below", M, save="all").v.values
        assert np.all(lo <= w + 1e-12) and np.all(w <= up + 1e-12)
        assert np.all(up >= 0) and np.all(lo <= 0)


def test_fraction_monotone_in_ell():
    g = _grid()
    fr = [solve_obstacle(OP, None, ell, 0.0, g, "above").fraction for ell in (-0.3, 0.0, 0.3, 1.0, 3.0)]
    assert all(a >= b - 1e-15 for a, b in zip(fr, fr[1:]))
    assert fr[0] == pytest.approx(1.0) and fr[-1] < 0.5


def test_nesting_identical_domains():
    K = cube(1.0)
    res = nesting_check(OP, None, -0.4, 0.0, K, K, 1 / 16, 1 / 2048, "above")
    assert res["shared_boundary"] and res["pass"] and res["mismatches"] == 0


def test_nesting_sub_box():
    K2 = cube(1.0)
    K1 = box((-0.5,), 1.0, -0.5, 0.5)
    res = nesting_check(OP, None, -0.4, 0.0, K1, K2, 1 / 16, 1 / 2048, "above")
    assert not res["shared_boundary"]
    assert res["pass"] and res["order_violation"] == 0.0


def test_nesting_rejects_outside():
    with pytest.raises(ConfigurationError):
        nesting_check(OP, None, -0.4, 0.0, cube(2.0), cube(1.0), 1 / 8, 1 / 256)


def test_bad_side():
    with pytest.raises(ConfigurationError):
        solve_obstacle(OP, None, 0.0, 0.0, _grid(), "sideways")
