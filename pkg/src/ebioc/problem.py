"""Array-form scene bundle shared by features, cost models, and solvers.

A Problem pins everything a solver needs about one scene: initial state,
the anchor control (last history control, used both as the delta-control
anchor and the first-difference anchor of the smoothness features), lane
geometry, goal, obstacle tracks, and the dynamics settings.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dynamics import DynamicsVariant
from .types import ControlBounds, Demonstration, Environment, History

GOAL_FROM_EXPERT = "expert_end"
GOAL_FROM_ENV = "env"

OBSTACLE_CAP_DEFAULT = 50.0
OBSTACLE_TEMP_DEFAULT = 1.0


@dataclass(frozen=True)
class Problem:
    x0: np.ndarray  # (4,)
    anchor: np.ndarray  # (2,) last history control
    lane: np.ndarray  # (4,)
    speed_limit: float
    goal: np.ndarray  # (2,)
    dt: float
    obstacles: np.ndarray  # (n_obs, T, 2)
    horizon: int
    variant: DynamicsVariant
    bounds: ControlBounds
    obstacle_cap: float = OBSTACLE_CAP_DEFAULT
    obstacle_temp: float = OBSTACLE_TEMP_DEFAULT

    def with_obstacles(self, obstacles: np.ndarray) -> "Problem":
        return replace(self, obstacles=np.ascontiguousarray(obstacles, dtype=np.float64))


def from_scene(
    history: History,
    env: Environment,
    horizon: int,
    variant: DynamicsVariant | None = None,
    bounds: ControlBounds | None = None,
    goal: np.ndarray | None = None,
    obstacle_cap: float = OBSTACLE_CAP_DEFAULT,
    obstacle_temp: float = OBSTACLE_TEMP_DEFAULT,
) -> Problem:
    """Build a Problem from a scene; the goal defaults to the environment's."""
    if variant is None:
        variant = DynamicsVariant(dt=env.dt)
    else:
        variant = variant.with_dt(env.dt)
    if bounds is None:
        bounds = ControlBounds()
    return Problem(
        x0=history.initial_state.as_array(),
        anchor=history.last_control.as_array(),
        lane=np.array(env.lane_center, dtype=np.float64),
        speed_limit=float(env.speed_limit),
        goal=np.array(env.goal if goal is None else goal, dtype=np.float64),
        dt=float(env.dt),
        obstacles=np.ascontiguousarray(env.obstacle_array(horizon)),
        horizon=int(horizon),
        variant=variant,
        bounds=bounds,
        obstacle_cap=obstacle_cap,
        obstacle_temp=obstacle_temp,
    )


def from_demonstration(
    demo: Demonstration,
    goal_mode: str = GOAL_FROM_ENV,
    variant: DynamicsVariant | None = None,
    bounds: ControlBounds | None = None,
    obstacle_cap: float = OBSTACLE_CAP_DEFAULT,
    obstacle_temp: float = OBSTACLE_TEMP_DEFAULT,
) -> Problem:
    """Build a Problem from a demonstration.

    With ``goal_mode="env"`` (the default) the scene-provided goal is
    used; ``"expert_end"`` substitutes the expert trajectory's endpoint.
    The scene goal is the default because the goal-distance features must
    be non-degenerate on the expert side for feature normalization and
    moment matching to be well-posed.
    """
    if goal_mode == GOAL_FROM_EXPERT:
        goal = demo.expert.states[-1, :2]
    elif goal_mode == GOAL_FROM_ENV:
        goal = None
    else:
        raise ValueError(f"unknown goal_mode {goal_mode!r}")
    return from_scene(
        demo.history,
        demo.environment,
        horizon=demo.expert.horizon,
        variant=variant,
        bounds=bounds,
        goal=goal,
        obstacle_cap=obstacle_cap,
        obstacle_temp=obstacle_temp,
    )
