"""Hand-crafted trajectory features and dataset-fitted normalization.

Ten per-frame scalars, summed over frames for the trajectory aggregate.
The ordering is frozen (cost parameter vectors index against it):

    0 dist_goal_lon        |goal_x - x| on the final frame only
    1 dist_goal_lat        |goal_y - y| on the final frame only
    2 dist_lane_center     |lateral offset from the lane cubic|
    3 speed_limit_diff     max(0, v - limit) + 0.1 |v - limit|
    4 lane_heading_diff    |h - atan(lane slope)|
    5 accel_l2             a^2
    6 steer_l2             steer^2
    7 accel_diff           (a_t - a_{t-1})^2, anchored at the history control
    8 steer_diff           (s_t - s_{t-1})^2, anchored likewise
    9 nearest_obstacle_dist  softmin obstacle distance, saturated at the cap
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .problem import Problem

FEATURE_NAMES = (
    "dist_goal_lon",
    "dist_goal_lat",
    "dist_lane_center",
    "speed_limit_diff",
    "lane_heading_diff",
    "accel_l2",
    "steer_l2",
    "accel_diff",
    "steer_diff",
    "nearest_obstacle_dist",
)

N_FEATURES = K.N_FEATURES

CONTROL_NAMES = ("accel", "steer")


def frame_feature_matrix(states: np.ndarray, controls: np.ndarray, prob: Problem) -> np.ndarray:
    """All per-frame feature vectors at once: (T, 10)."""
    return K.features(
        states,
        controls,
        prob.anchor,
        prob.lane,
        prob.speed_limit,
        prob.goal,
        prob.obstacles,
        prob.obstacle_cap,
        prob.obstacle_temp,
    )


def frame_features(states: np.ndarray, controls: np.ndarray, prob: Problem, t: int) -> np.ndarray:
    """Feature vector of one frame (10,)."""
    if not 0 <= t < states.shape[0]:
        raise IndexError(f"frame {t} outside horizon {states.shape[0]}")
    return frame_feature_matrix(states, controls, prob)[t]


def trajectory_features(states: np.ndarray, controls: np.ndarray, prob: Problem) -> np.ndarray:
    """Aggregate feature vector: sum of frame features over the horizon."""
    return frame_feature_matrix(states, controls, prob).sum(axis=0)


def feature_gradients(states: np.ndarray, controls: np.ndarray, prob: Problem):
    """Per-frame feature derivative stacks (dpx, dpu, dpp); see kernels."""
    return K.feature_grads(
        states,
        controls,
        prob.anchor,
        prob.lane,
        prob.speed_limit,
        prob.goal,
        prob.obstacles,
        prob.obstacle_cap,
        prob.obstacle_temp,
    )


def backward_through_features(gphi: np.ndarray, dpx, dpu, dpp):
    """Contract dC/dphi (T, 10) with the feature gradients.

    Returns (dx (T, 4), du (T, 2)): the direct cost gradients per frame
    w.r.t. states and controls; the control-difference features couple
    frame t to the control at t-1, which shows up as the shifted term.
    """
    return K.contract_feature_grads(np.ascontiguousarray(gphi), dpx, dpu, dpp)


# ---------------------------------------------------------------------------
# Normalization


class ZeroVarianceControlError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureNormalizer:
    """Feature divisors (training-set mean of |aggregate feature|) plus
    control mean/std for zero-mean unit-variance control normalization."""

    feature_div: np.ndarray  # (10,)
    control_mean: np.ndarray  # (2,)
    control_std: np.ndarray  # (2,)

    def __post_init__(self):
        fd = np.asarray(self.feature_div, dtype=np.float64)
        cm = np.asarray(self.control_mean, dtype=np.float64)
        cs = np.asarray(self.control_std, dtype=np.float64)
        if fd.shape != (N_FEATURES,) or cm.shape != (2,) or cs.shape != (2,):
            raise ValueError("normalizer has wrong shapes")
        if np.any(fd <= 0) or np.any(cs <= 0):
            raise ValueError("divisors and control std must be positive")
        object.__setattr__(self, "feature_div", fd)
        object.__setattr__(self, "control_mean", cm)
        object.__setattr__(self, "control_std", cs)

    @classmethod
    def identity(cls) -> "FeatureNormalizer":
        return cls(np.ones(N_FEATURES), np.zeros(2), np.ones(2))

    def normalize_features(self, phi: np.ndarray) -> np.ndarray:
        return phi / self.feature_div

    def denormalize_features(self, phi: np.ndarray) -> np.ndarray:
        return phi * self.feature_div

    def normalize_controls(self, u: np.ndarray) -> np.ndarray:
        return (u - self.control_mean) / self.control_std

    def denormalize_controls(self, u: np.ndarray) -> np.ndarray:
        return u * self.control_std + self.control_mean

    def to_dict(self) -> dict:
        return {
            "feature_div": [float(x) for x in self.feature_div],
            "control_mean": [float(x) for x in self.control_mean],
            "control_std": [float(x) for x in self.control_std],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureNormalizer":
        return cls(
            np.array(d["feature_div"], dtype=np.float64),
            np.array(d["control_mean"], dtype=np.float64),
            np.array(d["control_std"], dtype=np.float64),
        )


def fit_normalizer_from_matrices(feature_matrices, control_matrices) -> FeatureNormalizer:
    """Fit from precomputed per-demo feature matrices (T, 10) and control
    arrays (T, 2): divisors are the mean |aggregate feature|, controls get
    zero-mean unit-variance statistics per channel."""
    if len(feature_matrices) == 0:
        raise ValueError("cannot fit a normalizer on an empty dataset")
    agg = np.zeros(N_FEATURES)
    for phi in feature_matrices:
        agg += np.abs(np.asarray(phi).sum(axis=0))
    div = agg / len(feature_matrices)
    div = np.where(div > 1e-12, div, 1.0)

    all_u = np.concatenate(list(control_matrices), axis=0)
    mean = all_u.mean(axis=0)
    std = all_u.std(axis=0)
    for ch in range(2):
        if std[ch] <= 1e-12:
            raise ZeroVarianceControlError(
                f"control channel {CONTROL_NAMES[ch]!r} has zero variance in the training set"
            )
    return FeatureNormalizer(div, mean, std)


def fit_normalizer(problems, expert_states, expert_controls) -> FeatureNormalizer:
    """Fit divisors and control statistics on the training split.

    `problems`, `expert_states`, `expert_controls` are aligned lists (one
    per demonstration).
    """
    mats = [frame_feature_matrix(st, u, prob)
            for prob, st, u in zip(problems, expert_states, expert_controls)]
    return fit_normalizer_from_matrices(mats, list(expert_controls))


# ---------------------------------------------------------------------------
# Fixed-width scene encoding for the neural policy generator

ENV_ENCODING_DIM = 29
_MAX_ENCODED_OBSTACLES = 4


def encode_environment(prob: Problem) -> np.ndarray:
    """Flatten a scene to the fixed 29-dim vector consumed by the
    generator network: lane coefficients, speed limit, goal relative to
    x0, dt, then the nearest 4 obstacles as (x, y, dx/step, dy/step)
    relative to x0, zero-padded."""
    out = np.zeros(ENV_ENCODING_DIM, dtype=np.float64)
    out[0:4] = prob.lane
    out[4] = prob.speed_limit
    out[5] = prob.goal[0] - prob.x0[0]
    out[6] = prob.goal[1] - prob.x0[1]
    out[7] = prob.dt
    obs = prob.obstacles
    if obs.shape[0] > 0:
        first = obs[:, 0, :]
        dist = np.hypot(first[:, 0] - prob.x0[0], first[:, 1] - prob.x0[1])
        order = np.argsort(dist)[:_MAX_ENCODED_OBSTACLES]
        for slot, j in enumerate(order):
            base = 8 + 4 * slot
            out[base] = obs[j, 0, 0] - prob.x0[0]
            out[base + 1] = obs[j, 0, 1] - prob.x0[1]
            if obs.shape[1] > 1:
                steps = obs.shape[1] - 1
                out[base + 2] = (obs[j, -1, 0] - obs[j, 0, 0]) / steps
                out[base + 3] = (obs[j, -1, 1] - obs[j, 0, 1]) / steps
    return out
