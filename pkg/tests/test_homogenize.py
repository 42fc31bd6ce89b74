import json

import numpy as np
import pytest

from parahom.environment import EnvSpec
from parahom.errors import ConfigurationError
from parahom.homogenize import (EffectiveTable, barrier_floor, decreasing_within, ellipticity_of_fbar, estimate_fbar,
                                homogeneous_table)
from parahom.operators import OperatorSpec, SymMatrix

TRACE = OperatorSpec("scalar_modulated", 1.0, 1.0, "linear_trace")


@pytest.mark.parametrize("method", ["contact_dichotomy", "corrector_zero"])
@pytest.mark.parametrize("m", [1.0, -1.0])
def test_constant_medium_is_exact(method, m):
    spec = EnvSpec.constant(1.5)
    est = estimate_fbar(TRACE, spec, SymMatrix.scalar(m), method, 1e-3, 200, scale=3)
    lo, hi = est.bracket
    assert hi - lo <= 1e-3
    assert est.fbar == pytest.approx(1.5 * m, abs=2e-3)
    assert est.n_env == 1


def test_periodic_harmonic_mean(oracles):
    spec = EnvSpec.periodic([[1, 2]])
    est = estimate_fbar(TRACE, spec, SymMatrix.scalar(1.0), "corrector_zero", 2e-3, 200, scale=9)
    assert est.fbar == pytest.approx(oracles["harmonic_mean_1_2"], rel=0.03)
    # the discrete cell problem at high resolution agrees as well
    assert est.fbar == pytest.approx(oracles["periodic_corrector_1_2"]["256"], rel=0.03)
    # and the arithmetic mean 3/2 is excluded
    assert abs(est.fbar - 1.5) > 0.1


def test_pucci_sandwich_on_checkerboard():
    op = OperatorSpec("scalar_modulated", 1.0, 2.0, "pucci_minus")
    spec = EnvSpec.checkerboard(1.0, 2.0, 0.5)
    est = estimate_fbar(op, spec, SymMatrix.scalar(1.0), "corrector_zero", 5e-3, 400, n_env=4, scale=3)
    # F(M, y) = a(y) * 1 for M = 1 with a in [1, 2]
    assert 1.0 - 0.01 <= est.fbar <= 2.0 + 0.01


def test_budget_and_argument_errors():
    spec = EnvSpec.constant(1.0)
    with pytest.raises(ConfigurationError) as ei:
        estimate_fbar(TRACE, spec, SymMatrix.scalar(1.0), "corrector_zero", 1e-6, 5)
    assert ei.value.key == "budget"
    with pytest.raises(ConfigurationError):
        estimate_fbar(TRACE, spec, SymMatrix.scalar(1.0), "guess", 1e-3, 100)
    with pytest.raises(ConfigurationError):
        estimate_fbar(TRACE, spec, SymMatrix.scalar(1.0), "corrector_zero", 0.0, 100)


def _table(fb, widths=None):
    ms = [-2.0, -1.0, 0.0, 1.0, 2.0]
    return EffectiveTable(ms, fb, widths or [0.0] * 5, 1.0, 2.0)


def test_ellipticity_of_fbar():
    good = _table([-3.0, -1.5, 0.0, 1.2, 2.6])
    r = ellipticity_of_fbar(good)
    assert r["pass"] and r["pairs"] == 10
    # negative control: a decreasing segment breaks the lower bound
    bad = _table([-3.0, -1.5, 0.0, -0.5, 2.6])
    r = ellipticity_of_fbar(bad)
    assert not r["pass"] and r["violations"]
    # too steep breaks the upper bound
    steep = _table([-3.0, -1.5, 0.0, 1.2, 5.0])
    assert not ellipticity_of_fbar(steep)["pass"]
    saddle = EffectiveTable([-1.0, 0.0, 1.0], [0.3, 0.0, 0.3], [0.0] * 3, 1.0, 2.0, "saddle")
    assert ellipticity_of_fbar(saddle)["pairs"] == 0


def test_table_roundtrip_and_eval():
    t = _table([-3.0, -1.5, 0.0, 1.2, 2.6], [0.01] * 5)
    back = EffectiveTable.from_dict(json.loads(json.dumps(t.to_dict())))
    assert back == t
    assert t(0.5) == pytest.approx(0.6)
    with pytest.raises(ConfigurationError):
        t(3.0)


def test_homogeneous_table():
    spec = EnvSpec.constant(2.0)
    pos = estimate_fbar(TRACE, spec, SymMatrix.scalar(1.0), "corrector_zero", 1e-3, 100, scale=3)
    neg = estimate_fbar(TRACE, spec, SymMatrix.scalar(-1.0), "corrector_zero", 1e-3, 100, scale=3)
    t = homogeneous_table(pos, neg, 4.0, 2.0, 2.0)
    xs, ys = t.as_arrays()
    assert list(xs) == [-4.0, 0.0, 4.0]
    assert ys == pytest.approx([-8.0, 0.0, 8.0], abs=0.02)


def test_decreasing_within():
    stats = [{"eps": 0.5, "m": 1.0, "s": 0.1}, {"eps": 0.25, "m": 0.5, "s": 0.1}, {"eps": 0.125, "m": 0.55, "s": 0.1}]
    out = decreasing_within(stats, "m", "s")
    assert out[0]["strict"] and out[0]["significant"]
    assert not out[1]["strict"] and out[1]["not_increasing_within"]


def test_barrier_floor():
    op = OperatorSpec("pucci_minus", 1.0, 2.0)
    assert barrier_floor(op, None, 1, 0.5) == pytest.approx(0.5 / 5)
