import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from parahom.environment import EnvSpec
from parahom.errors import ConfigurationError
from parahom.ergodic import (CubeSequence, cell_sum_process, ergodic_average, maximal_inequality_check,
                             subadditivity_spot_check, vitali_postconditions, vitali_select, volume_process)


def test_vitali_unit_line(oracles):
    pts = np.arange(9)
    picks = vitali_select(pts, np.ones(9, dtype=int))
    assert picks == [0, 2, 4, 6, 8]
    assert len(picks) >= oracles["vitali_unit_9_min_picks"]
    post = vitali_postconditions(pts, np.ones(9, dtype=int), picks)
    assert post["disjoint"] and post["covers"] and post["dilated_cover"]


def test_vitali_single_point_family():
    picks = vitali_select([0], [1])
    assert picks == [0]
    # the largest cube goes first
    picks = vitali_select([[0, 0], [1, 1], [5, 5]], [[1, 1], [4, 4], [1, 1]])
    assert picks[0] == 1


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_vitali_random_nested(d, seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 40))
    flat = rng.choice(12**d, size=min(n, 12**d), replace=False)
    pts = np.stack(np.unravel_index(flat, (12,) * d), axis=1)
    chain = np.cumsum(rng.integers(1, 3, size=(4, d)), axis=0)
    sides = chain[rng.integers(0, 4, size=len(pts))]
    picks = vitali_select(pts, sides)
    post = vitali_postconditions(pts, sides, picks)
    assert post["disjoint"] and post["covers"] and post["dilated_cover"]


def test_vitali_bad_input():
    with pytest.raises(ValueError):
        vitali_select([[0, 0]], [[0, 1]])


def test_cube_sequences():
    s = CubeSequence.parabolic(1, [2, 4])
    assert s.sides == [(2, 4), (4, 16)] and s.volumes() == [8, 64]
    with pytest.raises(ConfigurationError):
        CubeSequence(1, [(3,), (2,)])
    with pytest.raises(ConfigurationError):
        CubeSequence(2, [(3,)])


def test_volume_process_ratio_is_one():
    res = ergodic_average(volume_process(), CubeSequence.standard(2, [1, 2, 4]), None, 2)
    assert [s["mean"] for s in res["stages"]] == [1.0, 1.0, 1.0]
    assert res["pooled_drift"] == 0.0


def test_cell_sum_law_of_large_numbers():
    spec = EnvSpec.checkerboard(1.0, 3.0, 0.25)
    res = ergodic_average(cell_sum_process(spec), CubeSequence.parabolic(1, [2, 4, 8, 16]), spec, 8, seed=2)
    last = res["stages"][-1]
    # E a = 0.25 * 3 + 0.75 * 1
    assert last["mean"] == pytest.approx(1.5, abs=4 * last["stderr"] + 1e-3)
    assert res["variance_shrinks"]


def test_cell_sum_is_additive():
    spec = EnvSpec.checkerboard(1.0, 2.0, 0.5, d=2)
    res = subadditivity_spot_check(cell_sum_process(spec), spec, 3, 30, seed=1)
    assert res["pass"] and abs(res["max_excess"]) < 1e-9
    with pytest.raises(ConfigurationError):
        cell_sum_process(EnvSpec.checkerboard(1.0, 2.0, 0.5, cell_x=2.0))


def test_maximal_inequality_cell_sum():
    spec = EnvSpec.checkerboard(1e-3, 1.0, 0.1)
    r = maximal_inequality_check(cell_sum_process(spec), CubeSequence.parabolic(1, [1, 2, 4]), spec, 200, 0.5,
                                 seed=3)
    assert r["pass"]
    assert r["p_exceed"] <= r["bound"] + r["slack"]
