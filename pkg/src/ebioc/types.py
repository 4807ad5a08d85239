"""Domain data model: states, controls, trajectories, scenes, demonstrations.

All types are immutable value objects; arrays are copied on construction
and marked read-only, so instances can be shared freely across workers.

The on-disk dataset format is JSON Lines, one demonstration per line:

    {"history": [{"state": [x, y, v, h], "control": [a, s]}, ...],
     "env": {"lane": [c0, c1, c2, c3], "speed_limit": .., "goal": [x, y],
             "dt": .., "obstacles": [[[x, y], ...], ...]},
     "expert": {"states": [[x, y, v, h], ...], "controls": [[a, s], ...]}}

Floats are serialized with Python's shortest round-trip repr, so a
save/load cycle reproduces every value bit-exactly.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np


class StructuralError(ValueError):
    """Shapes/lengths of a record are inconsistent (distinct from a record
    that is well-formed but dynamically inconsistent)."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class State:
    """Vehicle kinematic state: position (m), speed (m/s), heading (rad)."""

    x: float
    y: float
    v: float
    h: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.v, self.h], dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> "State":
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))

    def is_valid(self) -> bool:
        vals = (self.x, self.y, self.v, self.h)
        return all(math.isfinite(v) for v in vals) and self.v >= 0.0 and -math.pi < self.h <= math.pi


@dataclass(frozen=True)
class Control:
    """Per-step action: longitudinal acceleration (m/s^2) and steering angle (rad)."""

    accel: float
    steer: float

    def as_array(self) -> np.ndarray:
        return np.array([self.accel, self.steer], dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> "Control":
        return cls(float(a[0]), float(a[1]))


@dataclass(frozen=True)
class ControlBounds:
    """Physical limits applied when generating or decoding controls."""

    accel_max: float = 5.0
    steer_max: float = 0.6

    def as_array(self) -> np.ndarray:
        return np.array([self.accel_max, self.steer_max], dtype=np.float64)

    def clip(self, u: np.ndarray) -> np.ndarray:
        lim = self.as_array()
        return np.clip(u, -lim, lim)

    def contains(self, u: np.ndarray, atol: float = 1e-9) -> bool:
        lim = self.as_array()
        return bool(np.all(np.abs(u) <= lim + atol))


ABSOLUTE = "absolute"
DELTA = "delta"


@dataclass(frozen=True)
class ControlSequence:
    """A length-T sequence of controls, stored as a (T, 2) array.

    In ``absolute`` mode values[t] is u_t itself; in ``delta`` mode it is
    the per-step change, anchored at the last history control.
    """

    values: np.ndarray
    mode: str = ABSOLUTE

    def __post_init__(self):
        v = _readonly(self.values)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 1:
            raise StructuralError(f"control sequence must be (T, 2) with T >= 1, got {v.shape}")
        if self.mode not in (ABSOLUTE, DELTA):
            raise ValueError(f"unknown control parameterization {self.mode!r}")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def horizon(self) -> int:
        return self.values.shape[0]

    def control_at(self, t: int) -> Control:
        return Control.from_array(self.values[t])


def to_absolute(seq: ControlSequence, anchor: Control) -> ControlSequence:
    """Reconstruct absolute controls u_t = anchor + sum_{s<=t} delta_s."""
    if seq.mode == ABSOLUTE:
        warnings.warn("to_absolute called on an absolute-mode sequence; returning it unchanged")
        return seq
    absolute = np.cumsum(seq.values, axis=0) + anchor.as_array()[None, :]
    return ControlSequence(absolute, ABSOLUTE)


def to_delta(seq: ControlSequence, anchor: Control) -> ControlSequence:
    """First-difference an absolute sequence, anchored at the history control."""
    if seq.mode == DELTA:
        warnings.warn("to_delta called on a delta-mode sequence; returning it unchanged")
        return seq
    deltas = np.diff(seq.values, axis=0, prepend=anchor.as_array()[None, :])
    return ControlSequence(deltas, DELTA)


@dataclass(frozen=True)
class Trajectory:
    """State sequence plus the (absolute) controls that produced it."""

    states: np.ndarray  # (T, 4)
    controls: ControlSequence

    def __post_init__(self):
        s = _readonly(self.states)
        if s.ndim != 2 or s.shape[1] != 4:
            raise StructuralError(f"states must be (T, 4), got {s.shape}")
        if self.controls.mode != ABSOLUTE:
            raise StructuralError("trajectory controls must be in absolute mode")
        if s.shape[0] != self.controls.horizon:
            raise StructuralError(
                f"states length {s.shape[0]} != controls length {self.controls.horizon}"
            )
        object.__setattr__(self, "states", s)

    @property
    def horizon(self) -> int:
        return self.states.shape[0]

    def positions(self) -> np.ndarray:
        return self.states[:, :2]

    def state_at(self, t: int) -> State:
        return State.from_array(self.states[t])


@dataclass(frozen=True)
class OtherVehicleTrack:
    """Known positions of one other vehicle, one (x, y) per future timestep."""

    positions: np.ndarray  # (L, 2), L >= horizon

    def __post_init__(self):
        p = _readonly(self.positions)
        if p.ndim != 2 or p.shape[1] != 2:
            raise StructuralError(f"track positions must be (L, 2), got {p.shape}")
        object.__setattr__(self, "positions", p)

    def __len__(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class Environment:
    """Scene description: lane geometry, speed limit, goal, other vehicles.

    The lane center is a cubic polynomial giving lateral offset as a
    function of longitude: y = c0 + c1 x + c2 x^2 + c3 x^3.
    """

    lane_center: np.ndarray  # (4,) c0..c3
    speed_limit: float
    goal: np.ndarray  # (2,)
    dt: float = 0.1
    obstacles: tuple = field(default_factory=tuple)

    def __post_init__(self):
        lane = _readonly(self.lane_center)
        goal = _readonly(self.goal)
        if lane.shape != (4,):
            raise StructuralError(f"lane_center must have 4 coefficients, got {lane.shape}")
        if goal.shape != (2,):
            raise StructuralError(f"goal must be (x, y), got {goal.shape}")
        if not self.speed_limit > 0:
            raise ValueError("speed_limit must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "lane_center", lane)
        object.__setattr__(self, "goal", goal)
        object.__setattr__(self, "obstacles", tuple(self.obstacles))

    def lane_offset(self, x: float) -> float:
        c = self.lane_center
        return float(c[0] + x * (c[1] + x * (c[2] + x * c[3])))

    def lane_slope(self, x: float) -> float:
        c = self.lane_center
        return float(c[1] + x * (2.0 * c[2] + 3.0 * c[3] * x))

    def lane_heading(self, x: float) -> float:
        return math.atan(self.lane_slope(x))

    def obstacle_array(self, horizon: int) -> np.ndarray:
        """Stack obstacle tracks into (n_obs, horizon, 2); validates lengths."""
        n = len(self.obstacles)
        out = np.zeros((n, horizon, 2), dtype=np.float64)
        for j, track in enumerate(self.obstacles):
            if len(track) < horizon:
                raise StructuralError(
                    f"obstacle {j} track has {len(track)} positions, need >= {horizon}"
                )
            out[j] = track.positions[:horizon]
        return out


@dataclass(frozen=True)
class History:
    """Recent past (state, control) pairs for t = -k..0; the last state is x_0."""

    states: np.ndarray  # (k+1, 4)
    controls: np.ndarray  # (k+1, 2)

    def __post_init__(self):
        s = _readonly(self.states)
        c = _readonly(self.controls)
        if s.ndim != 2 or s.shape[1] != 4 or s.shape[0] < 1:
            raise StructuralError(f"history states must be (k+1, 4), got {s.shape}")
        if c.shape != (s.shape[0], 2):
            raise StructuralError(
                f"history controls shape {c.shape} does not match states {s.shape}"
            )
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "controls", c)

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def initial_state(self) -> State:
        return State.from_array(self.states[-1])

    @property
    def last_control(self) -> Control:
        return Control.from_array(self.controls[-1])


@dataclass(frozen=True)
class Demonstration:
    """One expert training record: recent past, scene, and expert rollout."""

    history: History
    environment: Environment
    expert: Trajectory


def validate_demonstration(demo: Demonstration, tol: float = 1e-9, variant=None):
    """Check that re-unrolling the expert controls reproduces the expert states.

    Returns (ok, report) where report carries the max per-coordinate error
    and the first offending timestep. Length mismatches raise
    StructuralError instead of reporting inconsistency.
    """
    from . import dynamics  # local import; dynamics depends on these types

    if variant is None:
        variant = dynamics.DynamicsVariant(dt=demo.environment.dt)
    expert = demo.expert
    if expert.horizon != expert.controls.horizon:
        raise StructuralError("expert states/controls length mismatch")
    rebuilt = dynamics.unroll(demo.history.initial_state, expert.controls, variant)
    err = np.abs(rebuilt.states - expert.states)
    max_err = float(err.max())
    ok = bool(max_err <= tol)
    report = {"max_error": max_err, "tol": tol}
    if not ok:
        bad_t = int(np.argwhere(err > tol)[0, 0])
        report["first_bad_timestep"] = bad_t
    return ok, report


# ---------------------------------------------------------------------------
# JSONL serialization


def demonstration_to_dict(demo: Demonstration) -> dict:
    env = demo.environment
    return {
        "history": [
            {"state": list(map(float, s)), "control": list(map(float, c))}
            for s, c in zip(demo.history.states, demo.history.controls)
        ],
        "env": {
            "lane": list(map(float, env.lane_center)),
            "speed_limit": float(env.speed_limit),
            "goal": list(map(float, env.goal)),
            "dt": float(env.dt),
            "obstacles": [
                [list(map(float, p)) for p in track.positions] for track in env.obstacles
            ],
        },
        "expert": {
            "states": [list(map(float, s)) for s in demo.expert.states],
            "controls": [list(map(float, c)) for c in demo.expert.controls.values],
        },
    }


def demonstration_from_dict(d: dict) -> Demonstration:
    hist = History(
        states=np.array([p["state"] for p in d["history"]], dtype=np.float64),
        controls=np.array([p["control"] for p in d["history"]], dtype=np.float64),
    )
    env_d = d["env"]
    env = Environment(
        lane_center=np.array(env_d["lane"], dtype=np.float64),
        speed_limit=float(env_d["speed_limit"]),
        goal=np.array(env_d["goal"], dtype=np.float64),
        dt=float(env_d["dt"]),
        obstacles=tuple(
            OtherVehicleTrack(np.array(t, dtype=np.float64)) for t in env_d["obstacles"]
        ),
    )
    expert = Trajectory(
        states=np.array(d["expert"]["states"], dtype=np.float64),
        controls=ControlSequence(np.array(d["expert"]["controls"], dtype=np.float64)),
    )
    return Demonstration(history=hist, environment=env, expert=expert)


def save_dataset(path, demos) -> None:
    with open(path, "w") as f:
        for demo in demos:
            f.write(json.dumps(demonstration_to_dict(demo)) + "\n")


def load_dataset(path):
    demos = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                demos.append(demonstration_from_dict(json.loads(line)))
    return demos
