"""Noise-driven trajectory generator used as a fast chain initializer.

A small policy MLP maps (current state, previous control, scene encoding,
per-step Gaussian noise) to the next control, alternating with the known
dynamics: one non-iterative forward pass produces a full trajectory
("ancestral" generation). During cooperative training the generator
regresses toward the chain-refined controls; its gradient is
reverse-accumulated through the whole policy-dynamics composition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .cost import ParamLayout
from .features import ENV_ENCODING_DIM, encode_environment
from .optim import AdamState, adam_step
from .problem import Problem

NOISE_DIM = 4
STATE_INPUT_DIM = 6  # relative kinematic state (4) + previous control (2)
INPUT_DIM = STATE_INPUT_DIM + ENV_ENCODING_DIM + NOISE_DIM
HIDDEN = (64, 16, 8)


def _input_scale() -> np.ndarray:
    """Fixed per-component input standardization; raw kinematic inputs span
    tens of meters while noise is unit scale, and an unscaled concat
    saturates the first layer."""
    s = np.ones(INPUT_DIM)
    s[0:2] = 10.0  # position relative to x0
    s[2] = 10.0  # speed
    s[4] = 5.0  # previous accel
    s[5] = 0.6  # previous steer
    env = np.ones(ENV_ENCODING_DIM)
    env[4] = 10.0  # speed limit
    env[5:7] = 50.0  # goal offset
    env[8:24] = 25.0  # obstacle slots
    s[STATE_INPUT_DIM:STATE_INPUT_DIM + ENV_ENCODING_DIM] = env
    return s


INPUT_SCALE = _input_scale()


class ContractViolation(RuntimeError):
    """The noise used for the generator loss differs from the one used to
    initialize the chains."""


def _layout() -> ParamLayout:
    dims = [INPUT_DIM, *HIDDEN, 2]
    shapes = []
    for i in range(len(dims) - 1):
        shapes.append((f"W{i}", (dims[i], dims[i + 1])))
        shapes.append((f"b{i}", (dims[i + 1],)))
    return ParamLayout(shapes)


@dataclass(frozen=True)
class PolicyGenerator:
    """Policy MLP parameters plus the control scaling (Tanh output is
    scaled by the control bounds, so generated controls always respect
    them)."""

    params: np.ndarray
    accel_max: float = 5.0
    steer_max: float = 0.6

    def __post_init__(self):
        layout = _layout()
        p = np.asarray(self.params, dtype=np.float64)
        if p.shape != (layout.size,):
            raise ValueError(f"generator parameter vector must have length {layout.size}")
        object.__setattr__(self, "params", p)

    @property
    def layout(self) -> ParamLayout:
        return _layout()

    @property
    def limits(self) -> np.ndarray:
        return np.array([self.accel_max, self.steer_max])

    def with_params(self, params: np.ndarray) -> "PolicyGenerator":
        return PolicyGenerator(params, accel_max=self.accel_max, steer_max=self.steer_max)

    @classmethod
    def create(cls, rng=None, accel_max: float = 5.0, steer_max: float = 0.6) -> "PolicyGenerator":
        layout = _layout()
        if rng is None:
            return cls(np.zeros(layout.size), accel_max=accel_max, steer_max=steer_max)
        dims = [INPUT_DIM, *HIDDEN, 2]
        arrays = {}
        for i in range(len(dims) - 1):
            std = math.sqrt(2.0 / dims[i])
            arrays[f"W{i}"] = rng.standard_normal((dims[i], dims[i + 1])) * std
            arrays[f"b{i}"] = np.zeros(dims[i + 1])
        return cls(layout.pack(arrays), accel_max=accel_max, steer_max=steer_max)

    def to_dict(self) -> dict:
        return {
            "kind": "generator",
            "config": {"accel_max": self.accel_max, "steer_max": self.steer_max},
            "layout": self.layout.to_descriptor(),
            "params": [float(x) for x in self.params],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyGenerator":
        cfg = d.get("config", {})
        return cls(np.array(d["params"], dtype=np.float64), **cfg)


def _policy_forward(gen: PolicyGenerator, inputs: np.ndarray):
    """MLP forward for a batch of per-step raw inputs (n, INPUT_DIM)."""
    layout = gen.layout
    h = inputs / INPUT_SCALE
    pre = []
    acts = [h]
    n_layers = len(HIDDEN) + 1
    for i in range(n_layers):
        W = layout.view(gen.params, f"W{i}")
        b = layout.view(gen.params, f"b{i}")
        z = h @ W + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < n_layers - 1 else np.tanh(z)
        acts.append(h)
    controls = acts[-1] * gen.limits
    return controls, pre, acts


def generate(gen: PolicyGenerator, prob: Problem, xi: np.ndarray):
    """Ancestral rollout: (controls (T, 2), states (T, 4)).

    Deterministic given (parameters, noise); the controls are within the
    bounds by construction.
    """
    xi = np.asarray(xi, dtype=np.float64)
    T = prob.horizon
    if xi.shape != (T, NOISE_DIM):
        raise ValueError(f"noise must be ({T}, {NOISE_DIM}), got {xi.shape}")
    env_vec = encode_environment(prob)
    var = prob.variant
    controls = np.zeros((T, 2))
    states = np.zeros((T, 4))
    x = prob.x0.copy()
    u_prev = prob.anchor.copy()
    for t in range(T):
        inp = np.concatenate([
            [x[0] - prob.x0[0], x[1] - prob.x0[1], x[2], x[3]],
            u_prev,
            env_vec,
            xi[t],
        ])[None, :]
        u, _, _ = _policy_forward(gen, inp)
        u = u[0]
        nxt, err = K.step(x, u, var.dt, var.wheelbase, var.code)
        if err != 0:
            raise FloatingPointError(f"dynamics domain error in generator rollout at step {t}")
        controls[t] = u
        states[t] = nxt
        x = nxt
        u_prev = u
    return controls, states


def _rollout_batch(gen: PolicyGenerator, prob_batch, xi_batch):
    """Batched ancestral rollout with caches for the backward pass.

    All scenes must share the horizon. Returns (controls (n, T, 2),
    states (n, T, 4), pres, acts) where pres/acts are per-step lists of
    per-layer (n, width) arrays.
    """
    n = len(prob_batch)
    T = prob_batch[0].horizon
    if any(p.horizon != T for p in prob_batch):
        raise ValueError("batched generation requires a shared horizon")
    env_vecs = np.stack([encode_environment(p) for p in prob_batch])
    x0s = np.stack([p.x0 for p in prob_batch])
    var = prob_batch[0].variant
    x = x0s.copy()
    u_prev = np.stack([p.anchor for p in prob_batch])
    controls = np.zeros((n, T, 2))
    states = np.zeros((n, T, 4))
    pres = []
    acts = []
    for t in range(T):
        inp = np.concatenate([
            np.column_stack([x[:, 0] - x0s[:, 0], x[:, 1] - x0s[:, 1], x[:, 2], x[:, 3]]),
            u_prev,
            env_vecs,
            np.stack([xi[t] for xi in xi_batch]),
        ], axis=1)
        u, pre, act = _policy_forward(gen, inp)
        pres.append(pre)
        acts.append(act)
        for idx in range(n):
            nxt, err = K.step(x[idx], u[idx], var.dt, var.wheelbase, var.code)
            if err != 0:
                raise FloatingPointError(
                    f"dynamics domain error in generator rollout at step {t}")
            x[idx] = nxt
            states[idx, t] = nxt
        controls[:, t] = u
        u_prev = u
    return controls, states, pres, acts


def generator_loss_grad(gen: PolicyGenerator, xi_batch, refined_batch, prob_batch,
                        init_controls=None):
    """Gradient of mean ||refined - G(xi)||^2 over the policy parameters,
    reverse-accumulated through the whole policy-dynamics composition.

    The same noise must be used here as in the initialization step; when
    `init_controls` is given, the regenerated controls are checked against
    it and a ContractViolation is raised on mismatch.

    Returns (loss, grad).
    """
    n = len(xi_batch)
    if not (len(refined_batch) == len(prob_batch) == n):
        raise ValueError("xi/refined/problem batches must be aligned")
    layout = gen.layout
    lim = gen.limits
    n_layers = len(HIDDEN) + 1
    T = prob_batch[0].horizon
    var = prob_batch[0].variant

    controls, states, pres, acts = _rollout_batch(gen, prob_batch, xi_batch)
    if init_controls is not None:
        for idx in range(n):
            if not np.allclose(controls[idx], np.asarray(init_controls[idx]), atol=1e-9):
                raise ContractViolation(
                    "generator loss evaluated with different noise than the chain initialization"
                )
    refined = np.stack([np.asarray(r, dtype=np.float64) for r in refined_batch])
    diff = controls - refined
    loss = float(np.sum(diff * diff)) / n

    A = np.zeros((n, T, 4, 4))
    B = np.zeros((n, T, 4, 2))
    for idx in range(n):
        A[idx], B[idx], err, _ = K.jacobians(prob_batch[idx].x0, states[idx],
                                             controls[idx], var.dt, var.wheelbase,
                                             var.code)
        if err != 0:
            raise FloatingPointError("dynamics domain error in generator backward pass")

    grad = np.zeros_like(gen.params)
    a_x = np.zeros((n, 4))
    a_u_next = np.zeros((n, 2))
    for t in range(T - 1, -1, -1):
        g_u = (2.0 / n) * diff[:, t] + a_u_next
        g_u = g_u + np.einsum("nkm,nk->nm", B[:, t], a_x)
        a_x = np.einsum("nkm,nk->nm", A[:, t], a_x)
        d = g_u * lim
        for i in range(n_layers - 1, -1, -1):
            W = layout.view(gen.params, f"W{i}")
            z = pres[t][i]
            if i == n_layers - 1:
                d = d * (1.0 - np.tanh(z) ** 2)
            else:
                d = d * (z > 0.0)
            lo, hi, _ = layout.offsets[f"W{i}"]
            grad[lo:hi] += (acts[t][i].T @ d).ravel()
            lo, hi, _ = layout.offsets[f"b{i}"]
            grad[lo:hi] += d.sum(axis=0)
            d = d @ W.T
        d = d / INPUT_SCALE  # back to raw input units
        a_x = a_x + d[:, :4]
        a_u_next = d[:, 4:6]
    return loss, grad


def train_cooperative(demos, model_kind: str, cfg, variant=None, bounds=None,
                      eval_fn=None, model_kwargs=None):
    """Joint training of the cost model and the generator.

    Per batch: sample noise, generate initial trajectories, refine them
    with the configured chain, update the cost parameters from the
    refined-vs-expert difference, then regress the generator toward the
    refined controls (cfg.generator_updates gradient steps, same noise).

    Returns (model, generator, trace).
    """
    from . import cost as C
    from . import learning as L
    from .rng import substream

    if cfg.init != "generator":
        raise ValueError('cooperative training requires cfg.init == "generator"')
    scenes, normalizer = L.prepare_dataset(demos, cfg, variant=variant, bounds=bounds)
    rng_init = substream(cfg.seed, "theta-init")
    model = C.create_model(model_kind, rng=rng_init, normalizer=normalizer,
                           **(model_kwargs or {}))
    b = scenes[0][0].prob.bounds
    gen = PolicyGenerator.create(rng=substream(cfg.seed, "alpha-init"),
                                 accel_max=b.accel_max, steer_max=b.steer_max)
    model, gen, trace = L.run_training(scenes, model, cfg, generator=gen, eval_fn=eval_fn)
    return model, gen, trace


def generator_update(gen: PolicyGenerator, xi_batch, refined_batch, prob_batch,
                     lr: float, optimizer: str = "gd",
                     adam_state: AdamState | None = None):
    """One regression update of the generator toward the refined controls.

    Returns (generator, adam_state); the state is None for plain GD and
    must be threaded through by the caller when optimizer="adam".
    """
    _, grad = generator_loss_grad(gen, xi_batch, refined_batch, prob_batch)
    if optimizer == "adam":
        if adam_state is None:
            adam_state = AdamState.zeros(gen.params.shape)
        upd, adam_state = adam_step(adam_state, grad, lr)
        return gen.with_params(gen.params + upd), adam_state
    return gen.with_params(gen.params - lr * grad), None
