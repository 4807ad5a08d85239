import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ebioc import data as D
from ebioc import problem as P
from ebioc.dynamics import DynamicsVariant, unroll_array
from ebioc.types import validate_demonstration


def test_scenarios_reproducible():
    spec = D.ScenarioSpec()
    a = D.gen_scenarios(spec, 5, seed=42)
    b = D.gen_scenarios(spec, 5, seed=42)
    for (h1, e1), (h2, e2) in zip(a, b):
        assert np.array_equal(h1.states, h2.states)
        assert np.array_equal(e1.lane_center, e2.lane_center)
        assert e1.speed_limit == e2.speed_limit
        for t1, t2 in zip(e1.obstacles, e2.obstacles):
            assert np.array_equal(t1.positions, t2.positions)


def test_zero_obstacle_zero_curvature_spec():
    spec = D.ScenarioSpec(n_obstacles=(0, 0), lane_c1=(0, 0), lane_c2=(0, 0),
                          lane_c3=(0, 0))
    for h, e in D.gen_scenarios(spec, 5, seed=1):
        assert len(e.obstacles) == 0
        assert np.allclose(e.lane_center[1:], 0.0)


def test_scenario_curvature_distribution():
    # c2 samples follow the configured uniform range (KS statistic < 0.05)
    spec = D.ScenarioSpec()
    scens = D.gen_scenarios(spec, 2000, seed=7)
    c2 = np.array([e.lane_center[2] for _, e in scens])
    lo, hi = spec.lane_c2
    sorted_c2 = np.sort((c2 - lo) / (hi - lo))
    ecdf = np.arange(1, len(sorted_c2) + 1) / len(sorted_c2)
    ks = float(np.max(np.abs(ecdf - sorted_c2)))
    assert ks < 0.05


def test_histories_dynamically_consistent():
    spec = D.ScenarioSpec()
    var = spec.variant()
    for h, e in D.gen_scenarios(spec, 5, seed=3):
        states = unroll_array(h.states[0], h.controls[1:], var)
        np.testing.assert_allclose(states, h.states[1:], atol=1e-9)


def test_expert_demos_validate_and_make_progress(tiny_dataset):
    for demo in tiny_dataset:
        ok, rep = validate_demonstration(demo, tol=1e-9)
        assert ok, rep
    # goal-seeking experts end nearer the goal than free rolling
    spec = D.ScenarioSpec()
    scens = D.gen_scenarios(spec, 8, seed=17)
    demos = D.gen_expert_demos(scens, "goal_seeker", 17, spec=spec,
                               expert_cfg=D.ExpertConfig(solver="gd", gd_steps=64,
                                                         jitter_steps=0))
    better = 0
    for demo in demos:
        prob = P.from_demonstration(demo, goal_mode="env")
        free = unroll_array(prob.x0, np.tile(prob.anchor, (prob.horizon, 1)),
                            prob.variant)
        d_free = np.hypot(*(free[-1, :2] - prob.goal))
        d_expert = np.hypot(*(demo.expert.states[-1, :2] - prob.goal))
        better += d_expert < d_free
    assert better >= int(0.7 * len(demos))


def test_expert_jitter_reproducible():
    spec = D.ScenarioSpec()
    scens = D.gen_scenarios(spec, 3, seed=5)
    a = D.gen_expert_demos(scens, "lane_keeper", seed=5, spec=spec)
    b = D.gen_expert_demos(scens, "lane_keeper", seed=5, spec=spec)
    for d1, d2 in zip(a, b):
        assert np.array_equal(d1.expert.controls.values, d2.expert.controls.values)


def test_split_ratio_and_reproducibility():
    data = list(range(100))
    train, test = D.split(data, 0.8, seed=1)
    assert len(train) == 80 and len(test) == 20
    train2, test2 = D.split(data, 0.8, seed=1)
    assert train == train2 and test == test2
    with pytest.raises(ValueError):
        D.split(data, 1.2, seed=0)


@given(st.integers(min_value=2, max_value=60), st.floats(min_value=0.05, max_value=0.95),
       st.integers(min_value=0, max_value=1000))
@settings(max_examples=40, deadline=None)
def test_split_union_and_disjoint(n, ratio, seed):
    data = list(range(n))
    train, test = D.split(data, ratio, seed)
    assert sorted(train + test) == data
    assert set(train).isdisjoint(test)


def test_ingest_tracks_round_trip():
    spec = D.ScenarioSpec(horizon=20, history_len=4)
    var = spec.variant()
    rng = np.random.default_rng(9)
    tracks = []
    for _ in range(3):
        x0 = np.array([0.0, 0.0, rng.uniform(8, 12), 0.0])
        controls = rng.normal(0, 0.25, (spec.history_len + spec.horizon, 2)) * [1.0, 0.02]
        states = unroll_array(x0, controls, var)
        tracks.append(np.vstack([x0[:2][None, :], states[:, :2]]))
    from ebioc.types import Environment

    env = Environment(lane_center=np.zeros(4), speed_limit=15.0, goal=np.zeros(2),
                      dt=spec.dt)
    demos, rejects = D.ingest_tracks(tracks, env, spec=spec, iters=600, lr=0.1)
    assert not rejects
    assert len(demos) == 3
    for demo, track in zip(demos, tracks):
        ok, rep = validate_demonstration(demo, tol=1e-9)
        assert ok
        # smoothed track stays near the source positions
        full = np.vstack([demo.history.states[:, :2], demo.expert.states[:, :2]])
        src = track[1:1 + full.shape[0] - demo.history.states.shape[0] + demo.history.states.shape[0]]
        err = np.hypot(*(demo.expert.states[:, :2]
                         - track[1 + spec.history_len:1 + spec.history_len + spec.horizon]).T)
        assert err.max() < 0.05


def test_ingest_rejects_bad_fit():
    spec = D.ScenarioSpec(horizon=10, history_len=2)
    rng = np.random.default_rng(10)
    # a physically impossible zig-zag track
    track = np.zeros((13, 2))
    track[:, 0] = np.arange(13) * 1.0
    track[:, 1] = rng.choice([-5, 5], size=13)
    from ebioc.types import Environment

    env = Environment(lane_center=np.zeros(4), speed_limit=15.0, goal=np.zeros(2),
                      dt=spec.dt)
    demos, rejects = D.ingest_tracks([track], env, spec=spec, iters=100, max_rmse=1.0)
    assert len(demos) == 0
    assert rejects[0]["reason"] == "fit rmse above threshold"


def test_ground_truth_presets():
    for name in ("lane_keeper", "goal_seeker", "defensive"):
        model = D.ground_truth_model(name)
        assert model.weights.shape == (10,)
    custom = D.ground_truth_model(np.arange(10.0))
    assert custom.weights[3] == 3.0
