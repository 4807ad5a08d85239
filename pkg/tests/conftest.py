import numpy as np
import pytest

from ebioc import data as D
from ebioc import problem as P
from ebioc.types import Environment, History, OtherVehicleTrack


@pytest.fixture
def simple_history():
    return History(states=np.array([[0.0, 0.0, 10.0, 0.0]]),
                   controls=np.array([[0.0, 0.0]]))


@pytest.fixture
def simple_env():
    return Environment(lane_center=np.zeros(4), speed_limit=12.0,
                       goal=np.array([40.0, 0.0]), dt=0.1)


@pytest.fixture
def curved_env():
    T = 40
    steps = np.arange(1, T + 1)[:, None] * 0.1
    track = OtherVehicleTrack(np.array([20.0, 1.5]) + steps * np.array([8.0, 0.0]))
    return Environment(lane_center=np.array([0.3, 0.01, 1e-4, -1e-6]), speed_limit=12.0,
                       goal=np.array([38.0, 1.2]), dt=0.1, obstacles=(track,))


@pytest.fixture
def simple_problem(simple_history, simple_env):
    return P.from_scene(simple_history, simple_env, horizon=40)


@pytest.fixture
def curved_problem(simple_history, curved_env):
    return P.from_scene(simple_history, curved_env, horizon=40)


def random_problem(rng, T=10, n_obstacles=1):
    """A generic scene with random lane/goal/obstacles, away from feature kinks."""
    lane = np.array([rng.uniform(-1, 1), rng.uniform(-0.05, 0.05),
                     rng.uniform(-0.003, 0.003), rng.uniform(-2e-5, 2e-5)])
    tracks = []
    for _ in range(n_obstacles):
        start = np.array([rng.uniform(5, 25), rng.uniform(-4, 4)])
        vel = np.array([rng.uniform(5, 10), rng.uniform(-0.3, 0.3)])
        steps = np.arange(1, T + 1)[:, None] * 0.1
        tracks.append(OtherVehicleTrack(start[None, :] + steps * vel[None, :]))
    env = Environment(lane_center=lane, speed_limit=rng.uniform(9, 14),
                      goal=np.array([rng.uniform(8, 12) * T * 0.1, rng.uniform(-3, 3)]),
                      dt=0.1, obstacles=tuple(tracks))
    v0 = rng.uniform(7, 12)
    hist = History(states=np.array([[0.0, rng.uniform(-1, 1), v0, rng.uniform(-0.1, 0.1)]]),
                   controls=np.array([[rng.uniform(-0.5, 0.5), rng.uniform(-0.05, 0.05)]]))
    return P.from_scene(hist, env, horizon=T)


def random_controls(rng, T=10):
    return rng.normal(0.0, 1.0, (T, 2)) * np.array([0.8, 0.06])


@pytest.fixture(scope="session")
def tiny_dataset():
    """Small jitter-free dataset for fast training tests."""
    spec = D.ScenarioSpec()
    scens = D.gen_scenarios(spec, 12, 5)
    xcfg = D.ExpertConfig(solver="gd", gd_steps=48, jitter_steps=0)
    return D.gen_expert_demos(scens, "lane_keeper", 5, spec=spec, expert_cfg=xcfg)
