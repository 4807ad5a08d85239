import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ebioc import dynamics
from ebioc.types import (Control, ControlSequence, Demonstration, Environment, History,
                         OtherVehicleTrack, StructuralError, Trajectory,
                         demonstration_from_dict, demonstration_to_dict, load_dataset,
                         save_dataset, to_absolute, to_delta, validate_demonstration)


def make_demo(controls, dt=0.1):
    var = dynamics.DynamicsVariant(dt=dt)
    hist = History(states=np.array([[0.0, 0.0, 10.0, 0.0]]), controls=np.array([[0.1, 0.0]]))
    seq = ControlSequence(np.asarray(controls, dtype=np.float64))
    traj = dynamics.unroll(hist.initial_state, seq, var)
    env = Environment(lane_center=np.zeros(4), speed_limit=12.0,
                      goal=np.array([traj.states[-1, 0], traj.states[-1, 1]]), dt=dt,
                      obstacles=(OtherVehicleTrack(np.tile([50.0, 3.0], (len(seq), 1))),))
    return Demonstration(history=hist, environment=env, expert=traj)


def test_validate_round_trip_demo():
    demo = make_demo(np.full((8, 2), [0.3, 0.01]))
    ok, report = validate_demonstration(demo, tol=1e-9)
    assert ok
    assert report["max_error"] <= 1e-9


def test_validate_detects_shifted_states():
    demo = make_demo(np.full((8, 2), [0.3, 0.01]))
    shifted = demo.expert.states.copy()
    shifted[:, 0] += 1.0
    bad = Demonstration(history=demo.history, environment=demo.environment,
                        expert=Trajectory(states=shifted, controls=demo.expert.controls))
    ok, report = validate_demonstration(bad, tol=1e-3)
    assert not ok
    assert report["max_error"] == pytest.approx(1.0, abs=1e-6)
    assert report["first_bad_timestep"] == 0


def test_validate_length_mismatch_is_structural():
    demo = make_demo(np.zeros((8, 2)))
    with pytest.raises(StructuralError):
        Trajectory(states=demo.expert.states[:-1], controls=demo.expert.controls)


def test_to_absolute_zero_deltas():
    seq = ControlSequence(np.zeros((5, 2)), mode="delta")
    out = to_absolute(seq, Control(1.0, 0.1))
    assert out.mode == "absolute"
    assert np.allclose(out.values, np.tile([1.0, 0.1], (5, 1)))


def test_to_absolute_prefix_sum():
    seq = ControlSequence(np.array([[0.1, 0.0], [0.1, 0.0]]), mode="delta")
    out = to_absolute(seq, Control(0.0, 0.0))
    assert np.allclose(out.values, [[0.1, 0.0], [0.2, 0.0]])


def test_to_absolute_on_absolute_warns_noop():
    seq = ControlSequence(np.ones((3, 2)))
    with pytest.warns(UserWarning):
        out = to_absolute(seq, Control(0.0, 0.0))
    assert out is seq


@given(st.integers(min_value=1, max_value=20), st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_delta_absolute_round_trip(T, seed):
    rng = np.random.default_rng(seed)
    deltas = rng.normal(0, 0.1, (T, 2))
    anchor = Control(*rng.normal(0, 1, 2))
    seq = ControlSequence(deltas, mode="delta")
    back = to_delta(to_absolute(seq, anchor), anchor)
    assert back.mode == "delta"
    # cumsum followed by first differences cancels only to rounding
    np.testing.assert_allclose(back.values, deltas, atol=1e-12)


def test_serialization_round_trip_exact(tmp_path):
    rng = np.random.default_rng(0)
    demos = [make_demo(rng.normal(0, 0.2, (6, 2)) * [1.0, 0.1]) for _ in range(4)]
    path = tmp_path / "demos.jsonl"
    save_dataset(path, demos)
    loaded = load_dataset(path)
    assert len(loaded) == len(demos)
    for a, b in zip(demos, loaded):
        assert np.array_equal(a.expert.states, b.expert.states)
        assert np.array_equal(a.expert.controls.values, b.expert.controls.values)
        assert np.array_equal(a.history.states, b.history.states)
        assert np.array_equal(a.environment.lane_center, b.environment.lane_center)
        assert a.environment.speed_limit == b.environment.speed_limit
        for ta, tb in zip(a.environment.obstacles, b.environment.obstacles):
            assert np.array_equal(ta.positions, tb.positions)


def test_dict_round_trip_matches_schema():
    demo = make_demo(np.zeros((4, 2)))
    d = demonstration_to_dict(demo)
    assert set(d) == {"history", "env", "expert"}
    assert set(d["env"]) == {"lane", "speed_limit", "goal", "dt", "obstacles"}
    assert set(d["history"][0]) == {"state", "control"}
    json.dumps(d)  # JSON-serializable
    back = demonstration_from_dict(d)
    assert np.array_equal(back.expert.states, demo.expert.states)


def test_environment_invariants():
    with pytest.raises(ValueError):
        Environment(lane_center=np.zeros(4), speed_limit=0.0, goal=np.zeros(2))
    with pytest.raises(StructuralError):
        Environment(lane_center=np.zeros(3), speed_limit=1.0, goal=np.zeros(2))
    env = Environment(lane_center=np.zeros(4), speed_limit=1.0, goal=np.zeros(2),
                      obstacles=(OtherVehicleTrack(np.zeros((5, 2))),))
    with pytest.raises(StructuralError):
        env.obstacle_array(10)  # track shorter than horizon
