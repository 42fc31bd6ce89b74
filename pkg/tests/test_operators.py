import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from parahom.environment import EnvSpec, sample_env
from parahom.grid import SpaceTimePoint
from parahom.operators import (OperatorSpec, SymMatrix, base_from_directional, check_uniform_ellipticity, eval_F,
                               pucci_minus, pucci_plus)

I2 = SymMatrix.identity(2)
D = SymMatrix.diag(1, -1)
P0 = SpaceTimePoint((0.0,), 0.0)


def test_pucci_examples():
    assert pucci_plus(I2, 1, 2) == 4
    assert pucci_plus(D, 1, 2) == 1
    assert pucci_plus(SymMatrix.zero(2), 1, 2) == 0
    assert pucci_minus(D, 1, 2) == -1
    assert pucci_minus(I2, 1, 2) == 2
    assert pucci_minus(SymMatrix.zero(2), 1, 2) == pucci_plus(SymMatrix.zero(2), 1, 2)


def test_invalid_constants():
    with pytest.raises(ValueError):
        pucci_plus(I2, 2, 1)
    with pytest.raises(ValueError):
        OperatorSpec("pucci_plus", 0, 1)
    with pytest.raises(ValueError):
        OperatorSpec("scalar_modulated", 1, 2)


def test_eigenvalues_closed_form():
    M = SymMatrix(2, (2.0, 1.0, -1.0))
    assert sorted(M.eigenvalues()) == pytest.approx(sorted(np.linalg.eigvalsh(M.to_array())))


def test_eval_F_examples():
    assert eval_F(OperatorSpec("linear_trace"), SymMatrix.scalar(2), P0) == 2
    env = sample_env(EnvSpec.constant(2.0, d=2), 0)
    op = OperatorSpec("scalar_modulated", 1, 2, "pucci_minus")
    assert eval_F(op, D, SpaceTimePoint((0.3, 0.1), 0.2), env) == -2
    shifted = OperatorSpec("pucci_plus", 1, 2).with_shift(-D)
    assert eval_F(shifted, D, SpaceTimePoint((0.0, 0.0), 0.0)) == 0
    with pytest.raises(ValueError):
        eval_F(op, D, SpaceTimePoint((0.0, 0.0), 0.0))


sym2 = st.tuples(*(st.floats(-5, 5, allow_nan=False),) * 3)


@settings(max_examples=200, deadline=None)
@given(sym2)
def test_pucci_duality_and_order(u):
    M = SymMatrix(2, u)
    assert pucci_plus(-M, 1, 3) == pytest.approx(-pucci_minus(M, 1, 3), abs=1e-12)
    assert pucci_minus(M, 1, 3) <= pucci_plus(M, 1, 3) + 1e-12


@settings(max_examples=200, deadline=None)
@given(sym2, sym2)
def test_lipschitz_in_M(u, v):
    op = OperatorSpec("pucci_plus", 1, 2)
    A, B = SymMatrix(2, u), SymMatrix(2, v)
    lo, hi = op.ellipticity_bounds(2)
    assert abs(eval_F(op, A, P0) - eval_F(op, B, P0)) <= hi * (A + (-B)).norm() + 1e-9


@pytest.mark.parametrize("kind", ["pucci_plus", "pucci_minus", "linear_trace"])
@pytest.mark.parametrize("d", [1, 2])
def test_uniform_ellipticity_of_shipped_kinds(kind, d):
    rep = check_uniform_ellipticity(OperatorSpec(kind, 1, 2), 1000, seed=1, d=d)
    assert rep["pass"]


def test_modulated_ellipticity_and_constant_trace():
    es = EnvSpec.checkerboard(1, 2, 0.5, d=1)
    env = sample_env(es, 3)
    rep = check_uniform_ellipticity(OperatorSpec("scalar_modulated", 1, 2, "pucci_minus"), 500, seed=2, env=env)
    assert rep["pass"] and rep["min_ratio"] >= 1 - 1e-9 and rep["max_ratio"] <= 4 + 1e-9
    env_c = sample_env(EnvSpec.constant(1.5), 0)
    rep = check_uniform_ellipticity(OperatorSpec("scalar_modulated", base="linear_trace"), 200, seed=3, env=env_c)
    assert rep["min_ratio"] == pytest.approx(1.5) and rep["max_ratio"] == pytest.approx(1.5)


def test_non_elliptic_operator_fails():
    rep = check_uniform_ellipticity(lambda M, p: M.norm() ** 2, 300, seed=4, d=2, bounds=(1.0, 2.0))
    assert not rep["pass"]


def test_directional_surrogate_matches_pucci_on_diagonal():
    for kind, f in (("pucci_plus", pucci_plus), ("pucci_minus", pucci_minus)):
        for M in (I2, D, SymMatrix.diag(3, 0.5), SymMatrix.zero(2)):
            assert base_from_directional(kind, M.directional(), 1, 2) == pytest.approx(f(M, 1, 2))
    assert base_from_directional("linear_trace", D.directional(), 1, 2) == 0


def test_with_shift_accumulates():
    op = OperatorSpec("linear_trace").with_shift(I2).with_shift(D)
    assert op.shift == SymMatrix(2, (2.0, 0.0, 0.0))
    assert op.base_at(SymMatrix.zero(2)) == 2
