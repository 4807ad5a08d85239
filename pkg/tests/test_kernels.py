"""The compiled kernels and their pure-python originals must agree exactly."""

import numpy as np
import pytest

from conftest import random_controls, random_problem
from ebioc import _kernels as K

pytestmark = pytest.mark.skipif(not K.USING_NUMBA,
                                reason="compiled path disabled; nothing to compare")


def scene_args(rng, T=12, n_obs=2):
    prob = random_problem(rng, T=T, n_obstacles=n_obs)
    controls = random_controls(rng, T=T)
    return prob, controls


def test_unroll_paths_agree():
    rng = np.random.default_rng(0)
    for variant in (K.VARIANT_BICYCLE, K.VARIANT_BICYCLE_ALT):
        prob, controls = scene_args(rng)
        a = K.unroll(prob.x0, controls, 0.1, 3.0, variant)
        b = K.unroll_py(prob.x0, controls, 0.1, 3.0, variant)
        assert a[1] == b[1] and a[2] == b[2]
        np.testing.assert_array_equal(a[0], b[0])


def test_step_paths_agree():
    rng = np.random.default_rng(1)
    for _ in range(20):
        s = np.array([rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(1, 12),
                      rng.uniform(-0.3, 0.3)])
        u = np.array([rng.uniform(-2, 2), rng.uniform(-0.3, 0.3)])
        for variant in (K.VARIANT_BICYCLE, K.VARIANT_BICYCLE_ALT):
            a, ea = K.step(s, u, 0.1, 3.0, variant)
            b, eb = K.step_py(s, u, 0.1, 3.0, variant)
            assert ea == eb
            np.testing.assert_array_equal(a, b)


def test_jacobians_paths_agree():
    rng = np.random.default_rng(2)
    prob, controls = scene_args(rng)
    states, _, _ = K.unroll(prob.x0, controls, 0.1, 3.0, K.VARIANT_BICYCLE)
    for variant in (K.VARIANT_BICYCLE, K.VARIANT_BICYCLE_ALT):
        a = K.jacobians(prob.x0, states, controls, 0.1, 3.0, variant)
        b = K.jacobians_py(prob.x0, states, controls, 0.1, 3.0, variant)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])


def test_features_and_grads_paths_agree():
    rng = np.random.default_rng(3)
    for n_obs in (0, 1, 3):
        prob, controls = scene_args(rng, n_obs=n_obs)
        states, _, _ = K.unroll(prob.x0, controls, prob.dt, 3.0, K.VARIANT_BICYCLE)
        args = (states, controls, prob.anchor, prob.lane, prob.speed_limit, prob.goal,
                prob.obstacles, prob.obstacle_cap, prob.obstacle_temp)
        np.testing.assert_array_equal(K.features(*args), K.features_py(*args))
        for a, b in zip(K.feature_grads(*args), K.feature_grads_py(*args)):
            np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(
            K.obstacle_position_grads(states, prob.obstacles, 50.0, 1.0),
            K.obstacle_position_grads_py(states, prob.obstacles, 50.0, 1.0))


def test_bptt_and_contract_paths_agree():
    rng = np.random.default_rng(4)
    prob, controls = scene_args(rng)
    states, _, _ = K.unroll(prob.x0, controls, 0.1, 3.0, K.VARIANT_BICYCLE)
    A, B, _, _ = K.jacobians(prob.x0, states, controls, 0.1, 3.0, K.VARIANT_BICYCLE)
    dx = rng.normal(0, 1, (12, 4))
    du = rng.normal(0, 1, (12, 2))
    np.testing.assert_array_equal(K.bptt(A, B, dx, du), K.bptt_py(A, B, dx, du))
    gphi = rng.normal(0, 1, (12, 10))
    args = (states, controls, prob.anchor, prob.lane, prob.speed_limit, prob.goal,
            prob.obstacles, prob.obstacle_cap, prob.obstacle_temp)
    grads = K.feature_grads(*args)
    for a, b in zip(K.contract_feature_grads(gphi, *grads),
                    K.contract_feature_grads_py(gphi, *grads)):
        np.testing.assert_array_equal(a, b)


def test_linear_grad_z_paths_agree():
    rng = np.random.default_rng(5)
    prob, _ = scene_args(rng, T=10)
    z = rng.normal(0, 0.3, (10, 2))
    w = rng.normal(0, 1, 10)
    args = (z, w, prob.x0, prob.anchor, prob.lane, prob.speed_limit, prob.goal,
            prob.obstacles, prob.obstacle_cap, prob.obstacle_temp, 0.1, 3.0,
            K.VARIANT_BICYCLE, np.zeros(2), np.ones(2), np.array([5.0, 0.6]))
    a = K.linear_grad_z(*args)
    b = K.linear_grad_z_py(*args)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_ilqr_forward_paths_agree():
    rng = np.random.default_rng(6)
    prob, controls = scene_args(rng, T=8)
    v_bar = np.diff(controls, axis=0, prepend=prob.anchor[None, :])
    states, _, _ = K.unroll(prob.x0, controls, 0.1, 3.0, K.VARIANT_BICYCLE)
    k_seq = rng.normal(0, 0.01, (8, 2))
    K_seq = rng.normal(0, 0.01, (8, 2, 6))
    args = (prob.x0, prob.anchor, v_bar, states, controls, k_seq, K_seq, 0.5,
            0.1, 3.0, K.VARIANT_BICYCLE, 5.0, 0.6)
    a = K.ilqr_forward(*args)
    b = K.ilqr_forward_py(*args)
    for x, y in zip(a[:3], b[:3]):
        np.testing.assert_array_equal(x, y)
    assert a[3] == b[3]
