import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from parahom.environment import (EnvSpec, child_seeds, decorrelation_estimate, hash_uniform, sample_env,
                                 translate)

rng = np.random.default_rng(0)
PX = rng.uniform(-20, 20, size=(100, 1))
PT = rng.uniform(-20, 20, size=100)


def test_constant_field():
    env = sample_env(EnvSpec.constant(3.0), 17)
    assert np.all(env.eval(PX, PT) == 3.0)
    assert np.all(translate(env, (1.3, -2.0)).eval(PX, PT) == 3.0)


def test_same_seed_same_field_different_seed_differs():
    es = EnvSpec.checkerboard(1, 2, 0.5)
    a = sample_env(es, 5).eval(PX, PT)
    assert np.array_equal(a, sample_env(es, 5).eval(PX, PT))
    assert not np.array_equal(a, sample_env(es, 6).eval(PX, PT))


def test_hash_is_deterministic_and_uniform():
    u = hash_uniform(123, np.arange(20000))
    assert np.array_equal(u, hash_uniform(123, np.arange(20000)))
    assert 0 <= u.min() and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.01
    assert len(set(child_seeds(1, 50))) == 50


@pytest.mark.parametrize("spec", [
    EnvSpec.checkerboard(1, 2, 0.5, cell_x=0.7, cell_t=1.3),
    EnvSpec.checkerboard(1, 2, 0.3, smoothing=0.25),
    EnvSpec.periodic([[1, 2, 3]]),
])
def test_translation_identity_and_group(spec):
    env = sample_env(spec, 9)
    v, w = (0.37, -1.1), (2.5, 0.4)
    t = translate(env, v)
    assert np.array_equal(t.eval(PX, PT), env.eval(PX + v[0], PT + v[1]))
    a = translate(translate(env, v), w).eval(PX, PT)
    b = translate(env, (v[0] + w[0], v[1] + w[1])).eval(PX, PT)
    assert np.allclose(a, b, rtol=0, atol=1e-12)


def test_period_shift_in_space():
    env = sample_env(EnvSpec.periodic([[1, 2]], cell_x=1.0), 2)
    assert np.array_equal(translate(env, (2.0, 0.0)).eval(PX, PT), env.eval(PX, PT))


def test_values_in_range():
    for spec in (EnvSpec.checkerboard(1, 2, 0.5, d=2), EnvSpec.checkerboard(1, 2, 0.5, d=2, smoothing=0.4)):
        X = rng.uniform(-5, 5, size=(500, 2))
        vals = sample_env(spec, 3).eval(X, rng.uniform(-5, 5, size=500))
        assert vals.min() >= 1 and vals.max() <= 2


def test_mollified_is_continuous_across_faces():
    env = sample_env(EnvSpec.checkerboard(1, 2, 0.5, smoothing=0.25), 4)
    x = np.linspace(-3, 3, 20001)[:, None]
    vals = env.eval(x, np.zeros(len(x)))
    assert np.max(np.abs(np.diff(vals))) < 0.01


def test_time_keys_group_identical_profiles():
    env = sample_env(EnvSpec.checkerboard(1, 2, 0.5), 8)
    T = np.linspace(0, 5, 60)
    keys = env.time_keys(T)
    X = np.linspace(-4, 4, 50)[:, None]
    for k in np.unique(keys):
        rows = [env.eval(X, t) for t in T[keys == k]]
        assert all(np.array_equal(rows[0], r) for r in rows)


def test_stationarity_of_one_point_law():
    # P(a = high) at a fixed point and at a shifted point, over many seeds
    es = EnvSpec.checkerboard(1, 2, 0.3)
    seeds = child_seeds(11, 3000)
    p0 = np.mean([sample_env(es, s).eval([[0.2]], 0.1)[0] == 2 for s in seeds])
    p1 = np.mean([sample_env(es, s).eval([[7.7]], -3.4)[0] == 2 for s in seeds])
    se = np.sqrt(0.3 * 0.7 / 3000)
    assert abs(p0 - 0.3) < 4 * se and abs(p1 - 0.3) < 4 * se


def test_decorrelation_constant_is_zero():
    assert decorrelation_estimate(EnvSpec.constant(2.0), 0.0, 10)["abs_cov"] == 0


def test_decorrelation_overlapping_windows_matches_oracle(oracles):
    est = decorrelation_estimate(EnvSpec.checkerboard(1, 2, 0.5), 0.0, 4000, seed=1)
    target = oracles["window_variance_c1_d1"]
    # quadrature of the window costs a little accuracy on top of the sampling error
    assert abs(est["cov"] - target) <= 3 * est["stderr"] + 0.02 * target


def test_decorrelation_far_windows_independent():
    est = decorrelation_estimate(EnvSpec.checkerboard(1, 2, 0.5), 3.0, 4000, seed=2)
    assert est["abs_cov"] <= 3 * est["stderr"]


def test_spec_validation():
    with pytest.raises(ValueError):
        EnvSpec.checkerboard(0, 2)
    with pytest.raises(ValueError):
        EnvSpec.checkerboard(1, 2, cell_x=0)
    with pytest.raises(ValueError):
        EnvSpec.periodic([[1, -1]])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**63 - 1))
def test_any_seed_gives_valid_field(seed):
    vals = sample_env(EnvSpec.checkerboard(1, 2, 0.5), seed).eval(PX[:10], PT[:10])
    assert set(np.unique(vals)) <= {1.0, 2.0}
