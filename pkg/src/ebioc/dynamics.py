"""Vehicle dynamics: stepping, unrolling, analytic Jacobians, and
inverse-dynamics control inference from position-only tracks.

Two variants are available:

* ``bicycle`` (default): the standard kinematic bicycle
    x' = x + v dt cos h,  y' = y + v dt sin h,
    v' = v + a dt,        h' = h + (v dt / L) tan(steer)
* ``bicycle_alt``: an alternative published transcription kept for
  comparison; its position update is driven by the steering angle with
  swapped axes and its heading update uses an arcsin with a v^2 radius
  term. Not recommended for new work.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels as K
from .types import Control, ControlBounds, ControlSequence, State, Trajectory, to_absolute

VARIANT_TAGS = {"bicycle": K.VARIANT_BICYCLE, "bicycle_alt": K.VARIANT_BICYCLE_ALT}

_ERR_MESSAGES = {
    K.ERR_SQRT: "negative radicand in the radius square root",
    K.ERR_ARCSIN: "arcsin argument outside [-1, 1] in the heading update",
    K.ERR_SPEED: "zero speed: curvature radius term vanishes",
    K.ERR_STEER: "|steer| >= pi/2",
}


class DynamicsDomainError(ValueError):
    """A dynamics step left the model's domain of validity."""

    def __init__(self, code: int, timestep: int | None = None):
        self.code = code
        self.timestep = timestep
        msg = _ERR_MESSAGES.get(code, f"dynamics error code {code}")
        if timestep is not None and timestep >= 0:
            msg += f" (timestep {timestep})"
        super().__init__(msg)


@dataclass(frozen=True)
class DynamicsVariant:
    """Which step equations to use, plus wheelbase and timestep."""

    tag: str = "bicycle"
    wheelbase: float = 3.0
    dt: float = 0.1

    def __post_init__(self):
        if self.tag not in VARIANT_TAGS:
            raise ValueError(f"unknown dynamics variant {self.tag!r}; use one of {sorted(VARIANT_TAGS)}")
        if not self.wheelbase > 0:
            raise ValueError("wheelbase must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def code(self) -> int:
        return VARIANT_TAGS[self.tag]

    def with_dt(self, dt: float) -> "DynamicsVariant":
        return replace(self, dt=dt)


def step(s: State, u: Control, variant: DynamicsVariant) -> State:
    out, err = K.step(s.as_array(), u.as_array(), variant.dt, variant.wheelbase, variant.code)
    if err != K.ERR_NONE:
        raise DynamicsDomainError(err)
    return State.from_array(out)


def unroll_array(x0: np.ndarray, controls: np.ndarray, variant: DynamicsVariant) -> np.ndarray:
    """Array-level unroll: x0 (4,), controls (T, 2) -> states (T, 4)."""
    states, err, err_t = K.unroll(x0, controls, variant.dt, variant.wheelbase, variant.code)
    if err != K.ERR_NONE:
        raise DynamicsDomainError(err, err_t)
    return states


def unroll(x0: State, seq: ControlSequence, variant: DynamicsVariant, anchor: Control | None = None) -> Trajectory:
    """Unroll a control sequence from x0. Delta-mode sequences need the anchor."""
    if seq.mode == "delta":
        if anchor is None:
            raise ValueError("delta-mode sequences require the anchor control")
        seq = to_absolute(seq, anchor)
    states = unroll_array(x0.as_array(), seq.values, variant)
    return Trajectory(states=states, controls=seq)


def step_jacobians(s: State, u: Control, variant: DynamicsVariant):
    """Analytic (A, B) = (d step/d state, d step/d control) at one point."""
    x0 = s.as_array()
    states, err, err_t = K.unroll(x0, u.as_array()[None, :], variant.dt, variant.wheelbase, variant.code)
    if err != K.ERR_NONE:
        raise DynamicsDomainError(err, err_t)
    A, B, err, err_t = K.jacobians(
        x0, states, u.as_array()[None, :], variant.dt, variant.wheelbase, variant.code
    )
    if err != K.ERR_NONE:
        raise DynamicsDomainError(err, err_t)
    return A[0], B[0]


def trajectory_jacobians(x0: np.ndarray, states: np.ndarray, controls: np.ndarray, variant: DynamicsVariant):
    """Per-step (A, B) stacks along a rollout (array level)."""
    A, B, err, err_t = K.jacobians(x0, states, controls, variant.dt, variant.wheelbase, variant.code)
    if err != K.ERR_NONE:
        raise DynamicsDomainError(err, err_t)
    return A, B


@dataclass
class InferControlsResult:
    controls: ControlSequence  # absolute
    states: np.ndarray
    rmse: float
    iterations: int


def _position_jacobian(x0a, states, controls, variant, T):
    """Full sensitivity of all (x, y) positions to all controls: (2T, 2T)."""
    A, B, err, err_t = K.jacobians(x0a, states, controls, variant.dt, variant.wheelbase,
                                   variant.code)
    if err != K.ERR_NONE:
        raise DynamicsDomainError(err, err_t)
    J = np.zeros((2 * T, 2 * T))
    for s in range(T):
        prop = B[s]
        J[2 * s:2 * s + 2, 2 * s:2 * s + 2] = prop[:2]
        for t in range(s + 1, T):
            prop = A[t] @ prop
            J[2 * t:2 * t + 2, 2 * s:2 * s + 2] = prop[:2]
    return J


def infer_controls(
    positions: np.ndarray,
    x0: State,
    variant: DynamicsVariant,
    iters: int = 500,
    lr: float = 0.3,
    clamp: float = 0.1,
    optimizer: str = "lm",
    bounds: ControlBounds | None = None,
    control_scales=(0.5, 0.02),
) -> InferControlsResult:
    """Fit controls so the rollout tracks the given positions.

    ``positions`` is (T+1, 2) including the initial position (which must
    match x0). The default solver is Levenberg-Marquardt on the positional
    least squares (the fit Jacobian is exact, built from the dynamics
    Jacobians); ``optimizer="adam"`` or ``"gd"`` instead take first-order
    steps on per-step control changes in per-channel scaled units with a
    per-update clamp. Decoded controls saturate at the physical bounds.
    Returns the positional RMSE of the fit.
    """
    from .optim import AdamState, adam_step

    positions = np.asarray(positions, dtype=np.float64)
    if positions.ndim != 2 or positions.shape[1] != 2 or positions.shape[0] < 2:
        raise ValueError("positions must be (T+1, 2) with at least 2 rows")
    if not np.allclose(positions[0], [x0.x, x0.y], atol=1e-6):
        raise ValueError("x0 position does not match positions[0]")
    bounds = bounds or ControlBounds()
    lim = bounds.as_array()
    scale = np.asarray(control_scales, dtype=np.float64)
    target = positions[1:]
    T = target.shape[0]
    x0a = x0.as_array()

    def rollout(u):
        states, err, err_t = K.unroll(x0a, u, variant.dt, variant.wheelbase, variant.code)
        if err != K.ERR_NONE:
            raise DynamicsDomainError(err, err_t)
        return states

    def loss_of(states):
        r = states[:, :2] - target
        return float(np.sum(r * r))

    used_iters = 0
    if optimizer == "lm":
        u = np.zeros((T, 2))
        states = rollout(u)
        loss = loss_of(states)
        lam = 1e-3
        for it in range(iters):
            used_iters = it + 1
            J = _position_jacobian(x0a, states, u, variant, T)
            r = (states[:, :2] - target).ravel()
            g = J.T @ r
            H = J.T @ J
            improved = False
            rel_drop = 0.0
            for _ in range(12):
                try:
                    step_w = np.linalg.solve(H + lam * np.eye(2 * T), -g)
                except np.linalg.LinAlgError:
                    lam *= 10.0
                    continue
                u_try = np.clip(u + step_w.reshape(T, 2), -lim, lim)
                states_try = rollout(u_try)
                loss_try = loss_of(states_try)
                if np.isfinite(loss_try) and loss_try < loss:
                    rel_drop = (loss - loss_try) / max(loss, 1e-300)
                    u, states, loss = u_try, states_try, loss_try
                    lam = max(lam / 3.0, 1e-12)
                    improved = True
                    break
                lam *= 10.0
            if not improved or loss < 1e-20 or rel_drop < 1e-9:
                break
        controls = u
    else:
        def decode(w):
            uu = np.cumsum(w * scale[None, :], axis=0)
            return np.clip(uu, -lim, lim), np.abs(uu) <= lim

        w = np.zeros((T, 2), dtype=np.float64)
        adam = AdamState.zeros(w.shape) if optimizer == "adam" else None
        for it in range(iters):
            used_iters = it + 1
            controls, mask = decode(w)
            states = rollout(controls)
            loss = loss_of(states)
            if not np.isfinite(loss):
                raise FloatingPointError(
                    "inverse-dynamics loss diverged; retry with a smaller learning rate"
                )
            A, B, err, err_t = K.jacobians(x0a, states, controls, variant.dt,
                                           variant.wheelbase, variant.code)
            if err != K.ERR_NONE:
                raise DynamicsDomainError(err, err_t)
            dx = np.zeros((T, 4), dtype=np.float64)
            dx[:, :2] = 2.0 * (states[:, :2] - target)
            g_u = np.where(mask, K.bptt(A, B, dx, np.zeros((T, 2))), 0.0)
            g_w = np.cumsum((g_u * scale[None, :])[::-1], axis=0)[::-1]
            if adam is not None:
                upd, adam = adam_step(adam, g_w, lr)
            else:
                upd = -lr * g_w
            w = w + np.clip(upd, -clamp, clamp)
        controls, _ = decode(w)

    states = rollout(controls)
    rmse = float(np.sqrt(np.mean(np.sum((states[:, :2] - target) ** 2, axis=1))))
    return InferControlsResult(
        controls=ControlSequence(controls),
        states=states,
        rmse=rmse,
        iterations=used_iters,
    )
