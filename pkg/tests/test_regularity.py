import numpy as np
import pytest

from parahom.environment import EnvSpec, sample_env
from parahom.errors import ConfigurationError
from parahom.grid import GridSpec, SpaceTimeField, cube
from parahom.operators import OperatorSpec, SymMatrix
from parahom.regularity import (inf_convolution_x, lipschitz_estimate, maximizer_distance_check,
                                semiconvexity_check, separation_check, sup_convolution_x)
from parahom.solver import make_grid

H = 1 / 64


def _field(fn, d=1):
    g = GridSpec(cube(1.0, d), H, 1 / 8)
    X = g.coords()
    vals = np.stack([fn(X, t) for t in g.times()])
    return SpaceTimeField(g, vals)


def _middle(g):
    return np.abs(g.coords()[..., 0]) <= 0.5


def test_sup_convolution_of_linear_function():
    a, theta = 0.8, 0.1
    u = _field(lambda X, t: a * X[..., 0] + t)
    f = sup_convolution_x(u, theta)
    exact = u.values + 0.5 * theta * a * a
    m = _middle(u.spec)
    assert np.max(np.abs(f.values[:, m] - exact[:, m])) <= H * H / theta
    g = inf_convolution_x(u, theta)
    assert np.max(np.abs(g.values[:, m] - (u.values[:, m] - 0.5 * theta * a * a))) <= H * H / theta


def test_sup_convolution_of_quadratic():
    c, theta = 1.0, 0.25
    u = _field(lambda X, t: 0.5 * c * X[..., 0] ** 2)
    f = sup_convolution_x(u, theta)
    exact = 0.5 * c * u.spec.coords()[..., 0] ** 2 / (1 - c * theta)
    m = np.abs(u.spec.coords()[..., 0]) <= 0.3
    assert np.max(np.abs(f.values[:, m] - exact[m])) <= H * H / theta


def test_tiny_theta_is_identity():
    u = _field(lambda X, t: np.sin(3 * X[..., 0]) * (1 + t))
    f = sup_convolution_x(u, H * H / 8)
    g = inf_convolution_x(u, H * H / 8)
    assert np.array_equal(f.values, u.values) and np.array_equal(g.values, u.values)


def test_semiconvexity_after_convolution():
    u = _field(lambda X, t: np.abs(np.sin(5 * X[..., 0])) * (1 + t))
    theta = 0.05
    f, arg = sup_convolution_x(u, theta, return_argmax=True)
    assert semiconvexity_check(f, theta, "sup")["pass"]
    assert semiconvexity_check(inf_convolution_x(u, theta), theta, "inf")["pass"]
    assert maximizer_distance_check(u, theta, arg)["pass"]
    assert np.all(f.values >= u.values) and np.all(inf_convolution_x(u, theta).values <= u.values)


def test_sawtooth_is_not_semiconvex():
    # a concave kink sharper than 1/theta allows
    u = _field(lambda X, t: -np.abs(X[..., 0]) * 4)
    assert not semiconvexity_check(u, 0.05, "sup")["pass"]


def test_constant_field_and_lipschitz():
    u = _field(lambda X, t: 0 * X[..., 0] + 2.0, d=2)
    assert lipschitz_estimate(u) == 0.0
    assert semiconvexity_check(u, 0.1)["extreme_second_difference"] == 0.0
    with pytest.raises(ConfigurationError):
        semiconvexity_check(u, 0.0)
    with pytest.raises(ConfigurationError):
        semiconvexity_check(u, 0.1, "middle")


def test_separation():
    op = OperatorSpec("scalar_modulated", 1.0, 2.0, "pucci_minus")
    spec = EnvSpec.checkerboard(1.0, 2.0, 0.5)
    M = SymMatrix.scalar(1.0)
    g = make_grid(op.with_shift(M), spec, cube(3.0), eps=1.0)
    for seed in range(3):
        env = sample_env(spec, seed)
        res = separation_check(op, env, -1.5, g, 1.0, M)
        assert res["min_h"] >= -1e-12
        if res["positivity_asserted"]:
            assert res["positive"]
    # deterministic, far from critical: one side is identically zero, product 0, nothing asserted
    plain = OperatorSpec("pucci_minus", 1.0, 2.0)
    res = separation_check(plain, None, 5.0, make_grid(plain, None, cube(1.0), h=1 / 16))
    assert res["mass_product"] == 0.0 and not res["positivity_asserted"]
