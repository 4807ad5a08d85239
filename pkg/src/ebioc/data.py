"""Synthetic highway scenarios and oracle expert demonstrations.

Scenes are randomized lane cubics, speed limits, initial speeds, and
constant-velocity traffic; histories come from short constant-control
warmups so every record is dynamically consistent by construction. Expert
controls are produced by solving a known ground-truth linear cost
(presets below), optionally followed by a short Langevin jitter, which
makes cost-recovery and moment-matching tests well-posed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import cost as C
from . import problem as P
from .dynamics import DynamicsVariant, infer_controls, unroll_array
from .multiagent import JointScene
from .rng import substream
from .sampler import SamplerConfig, SolverResult, gd_optimize, ilqr_solve, langevin_sample
from .types import (Control, ControlBounds, ControlSequence, Demonstration,
                    Environment, History, OtherVehicleTrack, State, Trajectory)

# Ground-truth cost presets over raw (unnormalized) features:
# [goal_lon, goal_lat, lane, speed, heading, accel_l2, steer_l2,
#  accel_diff, steer_diff, obstacle_dist]
THETA_PRESETS = {
    "lane_keeper": np.array([0.05, 0.05, 1.0, 0.5, 3.0, 0.05, 2.0, 1.0, 20.0, 0.0]),
    "goal_seeker": np.array([0.5, 0.5, 0.1, 0.3, 1.0, 0.05, 1.0, 0.5, 10.0, 0.0]),
    "defensive": np.array([0.05, 0.05, 1.0, 0.5, 3.0, 0.05, 2.0, 1.0, 20.0, -0.6]),
}


@dataclass(frozen=True)
class ScenarioSpec:
    horizon: int = 40
    dt: float = 0.1
    history_len: int = 9  # k past steps (k+1 recorded pairs)
    lane_c0: tuple = (-1.0, 1.0)
    lane_c1: tuple = (-0.02, 0.02)
    lane_c2: tuple = (-0.002, 0.002)
    lane_c3: tuple = (-5e-6, 5e-6)
    speed_limit: tuple = (8.0, 15.0)
    initial_speed_frac: tuple = (0.7, 1.0)  # of the speed limit
    n_obstacles: tuple = (0, 2)  # inclusive range
    obstacle_ahead: tuple = (15.0, 60.0)
    obstacle_lateral: tuple = (-4.0, 4.0)
    obstacle_speed_delta: tuple = (-3.0, 1.0)
    min_spawn_gap: float = 8.0
    goal_shortfall: tuple = (0.85, 1.0)  # goal longitude as a fraction of v0*T*dt
    n_agents: int = 1
    agent_spacing: float = 25.0  # longitudinal gap between agents (multi-agent)

    def bounds(self) -> ControlBounds:
        return ControlBounds()

    def variant(self) -> DynamicsVariant:
        return DynamicsVariant(dt=self.dt)


def _uniform(rng, lo_hi):
    return float(rng.uniform(lo_hi[0], lo_hi[1]))


def _make_history(spec: ScenarioSpec, x_start: np.ndarray, control: np.ndarray):
    """Constant-control warmup of k steps; returns (History, x0 array)."""
    k = spec.history_len
    var = spec.variant()
    controls = np.tile(control, (k, 1))
    states = unroll_array(x_start, controls, var) if k > 0 else np.zeros((0, 4))
    hist_states = np.vstack([x_start[None, :], states]) if k > 0 else x_start[None, :]
    hist_controls = np.vstack([control[None, :], controls]) if k > 0 else control[None, :]
    history = History(states=hist_states, controls=hist_controls)
    return history, hist_states[-1]


def _lane_poly(spec: ScenarioSpec, rng) -> np.ndarray:
    return np.array([
        _uniform(rng, spec.lane_c0),
        _uniform(rng, spec.lane_c1),
        _uniform(rng, spec.lane_c2),
        _uniform(rng, spec.lane_c3),
    ])


def _lane_point(lane: np.ndarray, x: float):
    y = lane[0] + x * (lane[1] + x * (lane[2] + x * lane[3]))
    slope = lane[1] + x * (2.0 * lane[2] + 3.0 * lane[3] * x)
    return y, slope


def _scenario_once(spec: ScenarioSpec, rng, lateral_shift: float = 0.0,
                   x_shift: float = 0.0):
    lane = _lane_poly(spec, rng).copy()
    lane[0] += lateral_shift
    limit = _uniform(rng, spec.speed_limit)
    v0 = limit * _uniform(rng, spec.initial_speed_frac)

    x_base = x_shift
    y_base, slope = _lane_point(lane, x_base)
    h0 = float(np.arctan(slope))
    start = np.array([x_base, y_base + rng.uniform(-0.3, 0.3), v0, h0])
    warm_control = np.array([rng.uniform(-0.2, 0.2), 0.0])
    history, x0 = _make_history(spec, start, warm_control)

    horizon_dist = x0[2] * spec.horizon * spec.dt
    gx = x0[0] + horizon_dist * _uniform(rng, spec.goal_shortfall)
    gy, _ = _lane_point(lane, gx)
    goal = np.array([gx, gy])

    n_obs = int(rng.integers(spec.n_obstacles[0], spec.n_obstacles[1] + 1))
    tracks = []
    for _ in range(n_obs):
        for _attempt in range(20):
            ahead = _uniform(rng, spec.obstacle_ahead)
            lat = _uniform(rng, spec.obstacle_lateral)
            ox = x0[0] + ahead
            oy, oslope = _lane_point(lane, ox)
            oy += lat
            speed = max(0.0, x0[2] + _uniform(rng, spec.obstacle_speed_delta))
            heading = np.arctan(oslope)
            if np.hypot(ox - x0[0], oy - x0[1]) >= spec.min_spawn_gap:
                break
        else:
            raise RuntimeError("could not place an obstacle clear of the ego spawn")
        steps = np.arange(1, spec.horizon + 1)[:, None] * spec.dt
        vel = speed * np.array([np.cos(heading), np.sin(heading)])
        positions = np.array([ox, oy])[None, :] + steps * vel[None, :]
        tracks.append(OtherVehicleTrack(positions))

    env = Environment(lane_center=lane, speed_limit=limit, goal=goal, dt=spec.dt,
                      obstacles=tuple(tracks))
    return history, env


def gen_scenarios(spec: ScenarioSpec, n: int, seed: int):
    """Reproducible list of (History, Environment) scenes."""
    out = []
    for i in range(n):
        rng = substream(seed, "scenario", i)
        out.append(_scenario_once(spec, rng))
    return out


def ground_truth_model(preset, bounds: ControlBounds | None = None) -> C.LinearCost:
    """Linear cost over raw features (identity normalizer); either a preset
    name or a 10-vector."""
    theta = THETA_PRESETS[preset] if isinstance(preset, str) else np.asarray(preset, dtype=np.float64)
    return C.LinearCost(theta.copy())


@dataclass(frozen=True)
class ExpertConfig:
    solver: str = "ilqr"  # ilqr | gd | langevin
    gd_steps: int = 200
    gd_step_size: float = 0.1
    langevin_steps: int = 64
    langevin_step_size: float = 0.1
    backtracking: bool = True
    # chain preconditioning for the gd solver: raw steering lives on a much
    # smaller scale than acceleration, so chain steps are taken in units of
    # these per-channel scales (the ground-truth model has no dataset to
    # fit a control normalizer from)
    accel_scale: float = 0.5
    steer_scale: float = 0.02
    # short Langevin jitter after the solve (0 steps disables)
    jitter_steps: int = 4
    jitter_step_size: float = 0.5
    jitter_accel_std: float = 0.01
    jitter_steer_std: float = 0.0005
    clamp: float = 0.1


def _scaled(model, accel_scale: float, steer_scale: float):
    from .features import FeatureNormalizer

    scale = FeatureNormalizer(np.ones(10), np.zeros(2),
                              np.array([accel_scale, steer_scale]))
    return model.with_normalizer(scale)


def _solve_expert(model, prob, xcfg: ExpertConfig, rng) -> SolverResult:
    if xcfg.solver == "ilqr":
        result = ilqr_solve(model, None, prob, SamplerConfig(kind="ilqr"))
    elif xcfg.solver == "gd":
        result = gd_optimize(_scaled(model, xcfg.accel_scale, xcfg.steer_scale), None,
                             prob, SamplerConfig(kind="gd", steps=xcfg.gd_steps,
                                                 step_size=xcfg.gd_step_size,
                                                 clamp=xcfg.clamp,
                                                 backtracking=xcfg.backtracking))
    elif xcfg.solver == "langevin":
        # experts as draws from the ground-truth trajectory density itself
        result = langevin_sample(_scaled(model, xcfg.accel_scale, xcfg.steer_scale),
                                 None, prob,
                                 SamplerConfig(kind="langevin", steps=xcfg.langevin_steps,
                                               step_size=xcfg.langevin_step_size,
                                               clamp=xcfg.clamp), rng)
        return result  # already stochastic; no extra jitter
    else:
        raise ValueError(f"unknown expert solver {xcfg.solver!r}")
    if xcfg.jitter_steps > 0:
        jitter_model = _scaled(model, xcfg.jitter_accel_std, xcfg.jitter_steer_std)
        jcfg = SamplerConfig(kind="langevin", steps=xcfg.jitter_steps,
                             step_size=xcfg.jitter_step_size, clamp=2.0)
        result = langevin_sample(jitter_model, result.controls, prob, jcfg, rng)
    return result


def gen_expert_demos(scenarios, theta_star, seed: int, spec: ScenarioSpec | None = None,
                     expert_cfg: ExpertConfig | None = None):
    """Expert demonstrations by solving the ground-truth cost per scene.

    Scenes where the solver fails are dropped (and counted); every
    returned demonstration re-unrolls exactly.
    """
    spec = spec or ScenarioSpec()
    xcfg = expert_cfg or ExpertConfig()
    model = ground_truth_model(theta_star)
    demos = []
    dropped = 0
    for i, (history, env) in enumerate(scenarios):
        prob = P.from_scene(history, env, horizon=spec.horizon, variant=spec.variant(),
                            bounds=spec.bounds())
        rng = substream(seed, "expert", i)
        try:
            result = _solve_expert(model, prob, xcfg, rng)
        except (FloatingPointError, np.linalg.LinAlgError):
            dropped += 1
            continue
        demos.append(Demonstration(history=history, environment=env,
                                   expert=result.trajectory))
    if dropped:
        import warnings

        warnings.warn(f"expert solver failed on {dropped} scene(s); dropped")
    return demos


def gen_joint_scenes(spec: ScenarioSpec, n_scenes: int, seed: int, theta_star="lane_keeper",
                     expert_cfg: ExpertConfig | None = None, interacting: bool = True):
    """Multi-agent scenes; agents share the road and are solved jointly.

    With interacting=False the agents are spread far beyond the obstacle
    cap so the joint problem decouples exactly.
    """
    from .multiagent import _coupled_problem, joint_solve

    xcfg = expert_cfg or ExpertConfig(solver="gd")
    model = ground_truth_model(theta_star)
    spacing = spec.agent_spacing if interacting else 6.0 * P.OBSTACLE_CAP_DEFAULT
    scenes = []
    for i in range(n_scenes):
        rng = substream(seed, "joint-scene", i)
        agents = []
        for k in range(spec.n_agents):
            lateral = rng.uniform(-3.0, 3.0) if interacting else 0.0
            history, env = _scenario_once(
                replace(spec, n_obstacles=(0, 0)), rng,
                lateral_shift=lateral, x_shift=k * spacing)
            agents.append((history, env))
        probs = [P.from_scene(h, e, horizon=spec.horizon, variant=spec.variant(),
                              bounds=spec.bounds()) for h, e in agents]
        solver_cfg = SamplerConfig(kind="gd", steps=xcfg.gd_steps,
                                   step_size=xcfg.gd_step_size, clamp=xcfg.clamp)
        results = joint_solve(model, probs, solver_cfg)
        demos = [Demonstration(history=h, environment=e, expert=r.trajectory)
                 for (h, e), r in zip(agents, results)]
        scenes.append(JointScene(tuple(demos)))
    return scenes


def split(dataset, ratio: float, seed: int):
    """Disjoint, exhaustive, seed-reproducible (train, test) split."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("split ratio must be in (0, 1)")
    n = len(dataset)
    perm = substream(seed, "split").permutation(n)
    n_train = int(round(ratio * n))
    train_idx = sorted(perm[:n_train])
    test_idx = sorted(perm[n_train:])
    return [dataset[i] for i in train_idx], [dataset[i] for i in test_idx]


def ingest_tracks(tracks, env_metadata, spec: ScenarioSpec | None = None,
                  iters: int = 500, lr: float = 0.1, max_rmse: float = 2.0):
    """Demonstrations from position-only tracks via inverse dynamics.

    Each track is (L, 2) positions sampled at dt with
    L >= history_len + horizon + 1; controls are inferred by gradient
    descent through the rollout, then states are re-unrolled so the
    result has exact dynamics. Tracks whose positional fit RMSE exceeds
    `max_rmse` are rejected.
    """
    spec = spec or ScenarioSpec()
    var = spec.variant()
    k = spec.history_len
    needed = k + spec.horizon + 1
    demos = []
    rejects = []
    for idx, track in enumerate(tracks):
        track = np.asarray(track, dtype=np.float64)
        if track.shape[0] < needed:
            rejects.append({"track": idx, "reason": "too short", "rmse": None})
            continue
        track = track[:needed]
        d0 = track[1] - track[0]
        v0 = float(np.hypot(d0[0], d0[1]) / spec.dt)
        h0 = float(np.arctan2(d0[1], d0[0]))
        x0 = State(track[0, 0], track[0, 1], v0, h0)
        fit = infer_controls(track, x0, var, iters=iters, lr=lr)
        if fit.rmse > max_rmse:
            rejects.append({"track": idx, "reason": "fit rmse above threshold",
                            "rmse": fit.rmse})
            continue
        all_states = np.vstack([x0.as_array()[None, :], fit.states])
        hist = History(states=all_states[:k + 1], controls=np.vstack(
            [fit.controls.values[0][None, :], fit.controls.values[:k]]))
        expert_controls = fit.controls.values[k:k + spec.horizon]
        x_start = State.from_array(all_states[k])
        expert_states = unroll_array(all_states[k], expert_controls, var)
        env = env_metadata[idx] if isinstance(env_metadata, (list, tuple)) else env_metadata
        goal = expert_states[-1, :2]
        env = Environment(lane_center=env.lane_center, speed_limit=env.speed_limit,
                          goal=goal, dt=env.dt, obstacles=env.obstacles)
        demos.append(Demonstration(
            history=hist,
            environment=env,
            expert=Trajectory(states=expert_states,
                              controls=ControlSequence(expert_controls)),
        ))
    return demos, rejects


# ---------------------------------------------------------------------------
# Scripted corner-case scenes


def corner_scenes(spec: ScenarioSpec | None = None):
    """Six scripted scenes: sudden braking (x2), lane cut-in (x2), large
    lane curvature (x2). Returns a list of (name, History, Environment)."""
    spec = spec or ScenarioSpec()
    T, dt = spec.horizon, spec.dt
    steps = np.arange(1, T + 1)[:, None] * dt
    scenes = []

    def straight_env(obstacles, goal_x, speed_limit=12.0, lane=None):
        lane = np.zeros(4) if lane is None else lane
        gy = lane[0] + goal_x * (lane[1] + goal_x * (lane[2] + goal_x * lane[3]))
        return Environment(lane_center=lane, speed_limit=speed_limit,
                           goal=np.array([goal_x, gy]), dt=dt, obstacles=tuple(obstacles))

    def ego_history(v0=10.0, lane=None):
        lane = np.zeros(4) if lane is None else lane
        h0 = float(np.arctan(lane[1]))
        start = np.array([0.0, lane[0], v0, h0])
        return _make_history(spec, start, np.array([0.0, 0.0]))[0]

    def braking_track(x_start, v_start, decel, y=0.0):
        # lead vehicle braking to a stop
        t = steps[:, 0]
        v = np.maximum(v_start - decel * t, 0.0)
        x = x_start + np.cumsum(v * dt)
        return OtherVehicleTrack(np.column_stack([x, np.full(T, y)]))

    def const_track(x_start, y_start, vx, vy=0.0):
        pos = np.array([x_start, y_start])[None, :] + steps * np.array([vx, vy])[None, :]
        return OtherVehicleTrack(pos)

    v0 = 10.0
    # (a, b) sudden braking: the lead stops in-lane and the route goal sits
    # behind its stopping point, so a safe stop is the optimal response;
    # case (b) adds neighbors boxing the ego in
    scenes.append(("sudden_brake_free",
                   ego_history(v0),
                   straight_env([braking_track(18.0, v0, 6.0)], goal_x=0.55 * v0 * T * dt)))
    scenes.append(("sudden_brake_boxed",
                   ego_history(v0),
                   straight_env([
                       braking_track(18.0, v0, 6.0),
                       const_track(2.0, 3.5, v0),
                       const_track(2.0, -3.5, v0),
                   ], goal_x=0.55 * v0 * T * dt)))
    # (c, d) cut-ins from the left and right: a slower vehicle merges ahead,
    # the goal pace requires yielding rather than passing
    for name, side in (("cut_in_left", 3.5), ("cut_in_right", -3.5)):
        lateral = np.linspace(side, 0.0, T // 2).tolist() + [0.0] * (T - T // 2)
        x = 10.0 + v0 * 0.72 * steps[:, 0]
        scenes.append((name,
                       ego_history(v0),
                       straight_env([OtherVehicleTrack(np.column_stack([x, lateral]))],
                                    goal_x=v0 * T * dt * 0.72)))
    # (e, f) large lane curvature
    for name, c2 in (("curve_left", 0.004), ("curve_right", -0.004)):
        lane = np.array([0.0, 0.0, c2, 0.0])
        gx = v0 * T * dt * 0.95
        scenes.append((name, ego_history(v0, lane), straight_env([], goal_x=gx, lane=lane)))
    return scenes
