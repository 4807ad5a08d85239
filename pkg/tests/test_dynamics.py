import math

import numpy as np
import pytest

from ebioc import _kernels as K
from ebioc.dynamics import (DynamicsDomainError, DynamicsVariant, InferControlsResult,
                            infer_controls, step, step_jacobians, trajectory_jacobians,
                            unroll, unroll_array)
from ebioc.types import Control, ControlSequence, State

BICYCLE = DynamicsVariant(tag="bicycle", dt=0.1)
ALT = DynamicsVariant(tag="bicycle_alt", dt=0.1)


def eval_bicycle_oracle(s, u, dt=0.1, L=3.0):
    """Independent evaluation of the closed-form step equations."""
    x, y, v, h = s
    a, st = u
    return np.array([
        x + v * dt * math.cos(h),
        y + v * dt * math.sin(h),
        v + a * dt,
        h + (v * dt / L) * math.tan(st),
    ])


def test_step_straight_line():
    out = step(State(0, 0, 10, 0), Control(0, 0), BICYCLE)
    assert out.as_array() == pytest.approx([1.0, 0.0, 10.0, 0.0])


def test_step_alt_variant_straight():
    # at zero steering the radius term collapses to v*dt and the motion
    # goes along +y (the alternative transcription swaps the axes)
    out = step(State(0, 0, 10, 0), Control(0, 0), ALT)
    assert out.as_array() == pytest.approx([0.0, 1.0, 10.0, 0.0])


def test_step_matches_formula_oracle():
    rng = np.random.default_rng(1)
    for _ in range(50):
        s = np.array([rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(1, 15),
                      rng.uniform(-0.5, 0.5)])
        u = np.array([rng.uniform(-3, 3), rng.uniform(-0.4, 0.4)])
        got = step(State.from_array(s), Control.from_array(u), BICYCLE).as_array()
        np.testing.assert_allclose(got, eval_bicycle_oracle(s, u), rtol=1e-15)


def test_unroll_matches_repeated_step():
    rng = np.random.default_rng(2)
    for variant in (BICYCLE, ALT):
        s = State(0.0, 0.0, 9.0, 0.05)
        controls = rng.normal(0, 0.2, (15, 2)) * np.array([1.0, 0.1])
        states = unroll_array(s.as_array(), controls, variant)
        cur = s
        for t in range(15):
            cur = step(cur, Control.from_array(controls[t]), variant)
            np.testing.assert_array_equal(states[t], cur.as_array())


def test_unroll_constant_velocity():
    states = unroll_array(np.array([0.0, 0.0, 10.0, 0.0]), np.zeros((5, 2)), BICYCLE)
    np.testing.assert_allclose(states[:, 0], [1, 2, 3, 4, 5])
    np.testing.assert_allclose(states[:, 1], 0)


def test_unroll_braking_closed_form():
    T = 20
    controls = np.tile([-2.0, 0.0], (T, 1))
    states = unroll_array(np.array([0.0, 0.0, 10.0, 0.0]), controls, BICYCLE)
    t = np.arange(1, T + 1)
    np.testing.assert_allclose(states[:, 2], 10 - 0.2 * t, rtol=1e-12)
    # position is the cumulative sum of pre-update speeds
    np.testing.assert_allclose(states[:, 0], np.cumsum(10 - 0.2 * (t - 1)) * 0.1, rtol=1e-12)


def test_unroll_deterministic():
    rng = np.random.default_rng(3)
    controls = rng.normal(0, 0.2, (12, 2))
    x0 = np.array([0.0, 0.0, 8.0, 0.1])
    a = unroll_array(x0, controls, BICYCLE)
    b = unroll_array(x0, controls, BICYCLE)
    assert np.array_equal(a, b)


def test_jacobian_structure_straight():
    A, B = step_jacobians(State(0, 0, 10, 0), Control(0, 0), BICYCLE)
    np.testing.assert_allclose(A[0], [1, 0, 0.1, 0])
    assert B[2][0] == pytest.approx(0.1)
    assert np.all(B[[0, 1, 3], 0] == 0)


@pytest.mark.parametrize("variant", [BICYCLE, ALT])
def test_jacobians_match_finite_differences(variant):
    rng = np.random.default_rng(4)
    eps = 1e-6
    worst = 0.0
    for _ in range(100):
        s = np.array([rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(2, 15),
                      rng.uniform(-0.4, 0.4)])
        u = np.array([rng.uniform(-3, 3), rng.uniform(-0.4, 0.4)])
        A, B = step_jacobians(State.from_array(s), Control.from_array(u), variant)
        for j in range(4):
            sp, sm = s.copy(), s.copy()
            sp[j] += eps
            sm[j] -= eps
            fd = (step(State.from_array(sp), Control.from_array(u), variant).as_array()
                  - step(State.from_array(sm), Control.from_array(u), variant).as_array()) / (2 * eps)
            worst = max(worst, np.max(np.abs(fd - A[:, j])))
        for j in range(2):
            up, um = u.copy(), u.copy()
            up[j] += eps
            um[j] -= eps
            fd = (step(State.from_array(s), Control.from_array(up), variant).as_array()
                  - step(State.from_array(s), Control.from_array(um), variant).as_array()) / (2 * eps)
            worst = max(worst, np.max(np.abs(fd - B[:, j])))
    assert worst < 1e-6


def test_domain_errors_name_the_term():
    with pytest.raises(DynamicsDomainError, match="steer"):
        step(State(0, 0, 10, 0), Control(0, 1.6), BICYCLE)
    with pytest.raises(DynamicsDomainError, match="curvature radius"):
        step(State(0, 0, 0.0, 0.0), Control(0, 0.1), ALT)
    with pytest.raises(DynamicsDomainError, match="arcsin"):
        step(State(0, 0, 0.05, 0.0), Control(0, 0.5), ALT)
    # unroll reports the offending timestep
    controls = np.zeros((5, 2))
    controls[3, 1] = 1.6
    with pytest.raises(DynamicsDomainError, match="timestep 3"):
        unroll_array(np.array([0.0, 0.0, 10.0, 0.0]), controls, BICYCLE)


def test_infer_controls_noiseless_round_trip():
    rng = np.random.default_rng(5)
    controls = rng.normal(0, 0.3, (20, 2)) * np.array([1.0, 0.03])
    x0 = np.array([0.0, 0.0, 9.0, 0.0])
    states = unroll_array(x0, controls, BICYCLE)
    positions = np.vstack([x0[:2][None, :], states[:, :2]])
    fit = infer_controls(positions, State.from_array(x0), BICYCLE, iters=500, lr=0.1)
    assert isinstance(fit, InferControlsResult)
    assert fit.rmse < 0.01


def test_infer_controls_constant_velocity_gives_zero_controls():
    x0 = np.array([0.0, 0.0, 10.0, 0.0])
    positions = np.column_stack([np.arange(0, 21) * 1.0, np.zeros(21)])
    fit = infer_controls(positions, State.from_array(x0), BICYCLE, iters=300, lr=0.05)
    assert np.max(np.abs(fit.controls.values)) < 1e-3


def test_infer_controls_rejects_inconsistent_x0():
    positions = np.array([[5.0, 0.0], [6.0, 0.0]])
    with pytest.raises(ValueError, match="positions"):
        infer_controls(positions, State(0, 0, 10, 0), BICYCLE)
