"""Parameterized trajectory cost models and their gradients.

Three kinds share one interface over the normalized per-frame feature
matrix (T, 10):

* ``linear``: dot product of a 10-weight vector with the aggregate features.
* ``mlp``: per-frame multilayer perceptron (LeakyReLU), summed over frames.
* ``cnn``: temporal 1-D convolution stack over the whole feature sequence
  (kernel 4, channels 32/64/128/256, strides 2/2/2/1), then a linear head;
  non-Markovian, so it is rejected by the per-frame (iLQR) solver.

`grad_wrt_controls` reverse-accumulates d(cost)/d(controls) through the
unrolled dynamics (adjoint/backward-in-time pass over the step Jacobians).
All math is float64 so finite-difference checks are meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from . import features as F
from .dynamics import trajectory_jacobians, unroll_array
from .problem import Problem
from .types import ControlSequence

LEAKY_SLOPE = 0.01


class UnsupportedModelError(TypeError):
    pass


def _leaky(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, z, LEAKY_SLOPE * z)


def _leaky_grad(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, 1.0, LEAKY_SLOPE)


class ParamLayout:
    """Named views into a flat parameter vector."""

    def __init__(self, shapes: list[tuple[str, tuple[int, ...]]]):
        self.shapes = [(name, tuple(shape)) for name, shape in shapes]
        self.offsets = {}
        off = 0
        for name, shape in self.shapes:
            size = int(np.prod(shape)) if shape else 1
            self.offsets[name] = (off, off + size, shape)
            off += size
        self.size = off

    def view(self, params: np.ndarray, name: str) -> np.ndarray:
        lo, hi, shape = self.offsets[name]
        return params[lo:hi].reshape(shape)

    def pack(self, arrays: dict) -> np.ndarray:
        out = np.zeros(self.size, dtype=np.float64)
        for name, _ in self.shapes:
            lo, hi, shape = self.offsets[name]
            out[lo:hi] = np.asarray(arrays[name], dtype=np.float64).ravel()
        return out

    def to_descriptor(self) -> list:
        return [[name, list(shape)] for name, shape in self.shapes]


class CostModel:
    """Base: value / per-frame gradient / parameter gradient over the
    normalized feature matrix."""

    kind: str = ""
    markovian: bool = True

    def __init__(self, params: np.ndarray, layout: ParamLayout, normalizer: F.FeatureNormalizer, config: dict):
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (layout.size,):
            raise ValueError(f"parameter vector length {params.shape} != layout size {layout.size}")
        self.params = params
        self.layout = layout
        self.normalizer = normalizer
        self.config = dict(config)

    def with_params(self, params: np.ndarray):
        return type(self)(params, normalizer=self.normalizer, **self.config)

    def with_normalizer(self, normalizer: F.FeatureNormalizer):
        return type(self)(self.params.copy(), normalizer=normalizer, **self.config)

    @property
    def n_params(self) -> int:
        return self.layout.size

    # interface over normalized features -----------------------------------
    def value(self, phi_n: np.ndarray) -> float:
        raise NotImplementedError

    def frame_grad(self, phi_n: np.ndarray) -> np.ndarray:
        """d(value)/d(phi_n): (T, 10)."""
        raise NotImplementedError

    def param_grad(self, phi_n: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def frame_values(self, phi_n: np.ndarray) -> np.ndarray:
        """Per-frame cost (Markovian kinds only)."""
        raise UnsupportedModelError(f"{self.kind} cost has no per-frame decomposition")

    # serialization ---------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "config": self.config,
            "layout": self.layout.to_descriptor(),
            "params": [float(x) for x in self.params],
            "normalizer": self.normalizer.to_dict(),
        }


class LinearCost(CostModel):
    kind = "linear"

    def __init__(self, params, normalizer=None):
        layout = ParamLayout([("weights", (F.N_FEATURES,))])
        super().__init__(params, layout, normalizer or F.FeatureNormalizer.identity(), {})

    @classmethod
    def create(cls, rng=None, normalizer=None) -> "LinearCost":
        w = rng.standard_normal(F.N_FEATURES) if rng is not None else np.zeros(F.N_FEATURES)
        return cls(w, normalizer=normalizer)

    @property
    def weights(self) -> np.ndarray:
        return self.layout.view(self.params, "weights")

    def value(self, phi_n):
        return float(phi_n.sum(axis=0) @ self.weights)

    def frame_grad(self, phi_n):
        return np.broadcast_to(self.weights, phi_n.shape).copy()

    def param_grad(self, phi_n):
        return phi_n.sum(axis=0).copy()

    def frame_values(self, phi_n):
        return phi_n @ self.weights


class MlpCost(CostModel):
    kind = "mlp"

    def __init__(self, params, hidden_dim: int = 64, hidden_layers: int = 2, normalizer=None):
        dims = [F.N_FEATURES] + [hidden_dim] * hidden_layers + [1]
        shapes = []
        for i in range(len(dims) - 1):
            shapes.append((f"W{i}", (dims[i], dims[i + 1])))
            shapes.append((f"b{i}", (dims[i + 1],)))
        layout = ParamLayout(shapes)
        super().__init__(
            params,
            layout,
            normalizer or F.FeatureNormalizer.identity(),
            {"hidden_dim": hidden_dim, "hidden_layers": hidden_layers},
        )
        self.n_layers = len(dims) - 1

    @classmethod
    def create(cls, hidden_dim=64, hidden_layers=2, rng=None, normalizer=None) -> "MlpCost":
        dims = [F.N_FEATURES] + [hidden_dim] * hidden_layers + [1]
        size = sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))
        model = cls(np.zeros(size), hidden_dim=hidden_dim, hidden_layers=hidden_layers,
                    normalizer=normalizer)
        if rng is not None:
            arrays = {}
            for i in range(len(dims) - 1):
                std = math.sqrt(2.0 / dims[i])
                arrays[f"W{i}"] = rng.standard_normal((dims[i], dims[i + 1])) * std
                arrays[f"b{i}"] = np.zeros(dims[i + 1])
            model = cls(model.layout.pack(arrays), hidden_dim=hidden_dim,
                        hidden_layers=hidden_layers, normalizer=normalizer)
        return model

    def _forward(self, phi_n):
        acts = [phi_n]
        pre = []
        h = phi_n
        for i in range(self.n_layers):
            W = self.layout.view(self.params, f"W{i}")
            b = self.layout.view(self.params, f"b{i}")
            z = h @ W + b
            pre.append(z)
            h = _leaky(z) if i < self.n_layers - 1 else z
            acts.append(h)
        return acts, pre

    def value(self, phi_n):
        acts, _ = self._forward(phi_n)
        return float(acts[-1].sum())

    def frame_values(self, phi_n):
        acts, _ = self._forward(phi_n)
        return acts[-1][:, 0]

    def _backward(self, phi_n, want_params: bool):
        acts, pre = self._forward(phi_n)
        grad_p = np.zeros_like(self.params) if want_params else None
        d = np.ones_like(acts[-1])
        for i in range(self.n_layers - 1, -1, -1):
            W = self.layout.view(self.params, f"W{i}")
            if i < self.n_layers - 1:
                d = d * _leaky_grad(pre[i])
            if want_params:
                lo, hi, shape = self.layout.offsets[f"W{i}"]
                grad_p[lo:hi] = (acts[i].T @ d).ravel()
                lo, hi, shape = self.layout.offsets[f"b{i}"]
                grad_p[lo:hi] = d.sum(axis=0)
            d = d @ W.T
        return d, grad_p

    def frame_grad(self, phi_n):
        d, _ = self._backward(phi_n, want_params=False)
        return d

    def param_grad(self, phi_n):
        _, g = self._backward(phi_n, want_params=True)
        return g


def _conv_out_len(length: int, kernel: int, stride: int) -> int:
    return max(1, -(-(length - kernel) // stride) + 1)


class ConvCost(CostModel):
    """Temporal convolution over the (T, 10) feature sequence.

    Windows that run off the end of the sequence are treated as
    zero-padded, which reproduces the 40 -> 19 -> 9 -> 4 -> 1 length
    pyramid at the default horizon.
    """

    kind = "cnn"
    markovian = False

    CHANNELS = (32, 64, 128, 256)
    STRIDES = (2, 2, 2, 1)
    KERNEL = 4

    def __init__(self, params, horizon: int = 40, normalizer=None):
        self.horizon = int(horizon)
        self.lengths = [self.horizon]
        chans = (F.N_FEATURES,) + self.CHANNELS
        shapes = []
        L = self.horizon
        for i, (c_out, stride) in enumerate(zip(self.CHANNELS, self.STRIDES)):
            shapes.append((f"W{i}", (c_out, chans[i], self.KERNEL)))
            shapes.append((f"b{i}", (c_out,)))
            L = _conv_out_len(L, self.KERNEL, stride)
            self.lengths.append(L)
        shapes.append(("W_head", (self.CHANNELS[-1] * self.lengths[-1],)))
        shapes.append(("b_head", (1,)))
        layout = ParamLayout(shapes)
        super().__init__(params, layout, normalizer or F.FeatureNormalizer.identity(), {"horizon": horizon})

    @classmethod
    def create(cls, horizon=40, rng=None, normalizer=None) -> "ConvCost":
        probe = cls(np.zeros(cls._layout_size(horizon)), horizon=horizon, normalizer=normalizer)
        arrays = {}
        chans = (F.N_FEATURES,) + cls.CHANNELS
        for i, c_out in enumerate(cls.CHANNELS):
            fan_in = chans[i] * cls.KERNEL
            std = math.sqrt(2.0 / fan_in)
            arrays[f"W{i}"] = (rng.standard_normal((c_out, chans[i], cls.KERNEL)) * std
                               if rng is not None else np.zeros((c_out, chans[i], cls.KERNEL)))
            arrays[f"b{i}"] = np.zeros(c_out)
        head_in = cls.CHANNELS[-1] * probe.lengths[-1]
        arrays["W_head"] = (rng.standard_normal(head_in) * math.sqrt(2.0 / head_in)
                            if rng is not None else np.zeros(head_in))
        arrays["b_head"] = np.zeros(1)
        return cls(probe.layout.pack(arrays), horizon=horizon, normalizer=normalizer)

    @classmethod
    def _layout_size(cls, horizon: int) -> int:
        chans = (F.N_FEATURES,) + cls.CHANNELS
        size = 0
        L = horizon
        for i, (c_out, stride) in enumerate(zip(cls.CHANNELS, cls.STRIDES)):
            size += c_out * chans[i] * cls.KERNEL + c_out
            L = _conv_out_len(L, cls.KERNEL, stride)
        size += cls.CHANNELS[-1] * L + 1
        return size

    def _check_horizon(self, phi_n):
        if phi_n.shape[0] != self.horizon:
            raise ValueError(
                f"cnn cost built for horizon {self.horizon}, got {phi_n.shape[0]} frames"
            )

    @staticmethod
    def _conv_forward(x, W, b, stride, kernel):
        # x: (C_in, L); returns pre-activation (C_out, L_out)
        c_in, L = x.shape
        L_out = _conv_out_len(L, kernel, stride)
        padded_len = (L_out - 1) * stride + kernel
        xp = np.zeros((c_in, padded_len))
        xp[:, :L] = x
        windows = np.stack([xp[:, o * stride:o * stride + kernel] for o in range(L_out)], axis=0)
        z = np.tensordot(windows, W, axes=([1, 2], [1, 2])).T + b[:, None]
        return z, windows

    def _forward(self, phi_n):
        self._check_horizon(phi_n)
        x = phi_n.T  # (10, T)
        cache = []
        for i, (stride) in enumerate(self.STRIDES):
            W = self.layout.view(self.params, f"W{i}")
            b = self.layout.view(self.params, f"b{i}")
            z, windows = self._conv_forward(x, W, b, stride, self.KERNEL)
            a = _leaky(z)
            cache.append((x, z, windows))
            x = a
        flat = x.ravel()
        head = self.layout.view(self.params, "W_head")
        bias = self.layout.view(self.params, "b_head")
        out = float(flat @ head + bias[0])
        return out, x, flat, cache

    def value(self, phi_n):
        return self._forward(phi_n)[0]

    def _backward(self, phi_n, want_params):
        out, x_last, flat, cache = self._forward(phi_n)
        grad_p = np.zeros_like(self.params) if want_params else None
        head = self.layout.view(self.params, "W_head")
        if want_params:
            lo, hi, _ = self.layout.offsets["W_head"]
            grad_p[lo:hi] = flat
            lo, hi, _ = self.layout.offsets["b_head"]
            grad_p[lo:hi] = 1.0
        dx = head.reshape(x_last.shape).copy()
        for i in range(len(self.CHANNELS) - 1, -1, -1):
            x_in, z, windows = cache[i]
            W = self.layout.view(self.params, f"W{i}")
            dz = dx * _leaky_grad(z)  # (C_out, L_out)
            if want_params:
                lo, hi, shape = self.layout.offsets[f"W{i}"]
                gw = np.tensordot(dz, windows, axes=([1], [0]))  # (C_out, C_in, k)
                grad_p[lo:hi] = gw.ravel()
                lo, hi, shape = self.layout.offsets[f"b{i}"]
                grad_p[lo:hi] = dz.sum(axis=1)
            stride = self.STRIDES[i]
            c_in, L = x_in.shape
            L_out = z.shape[1]
            padded_len = (L_out - 1) * stride + self.KERNEL
            dxp = np.zeros((c_in, padded_len))
            # scatter window gradients back to input positions
            dwin = np.tensordot(dz, W, axes=([0], [0]))  # (L_out, C_in, k)
            for o in range(L_out):
                dxp[:, o * stride:o * stride + self.KERNEL] += dwin[o]
            dx = dxp[:, :L]
        return dx.T, grad_p  # (T, 10)

    def frame_grad(self, phi_n):
        d, _ = self._backward(phi_n, want_params=False)
        return d

    def param_grad(self, phi_n):
        _, g = self._backward(phi_n, want_params=True)
        return g


_MODEL_KINDS = {"linear": LinearCost, "mlp": MlpCost, "cnn": ConvCost}


def create_model(kind: str, rng=None, normalizer=None, hidden_dim: int = 64,
                 hidden_layers: int = 2, horizon: int = 40) -> CostModel:
    if kind == "linear":
        return LinearCost.create(rng=rng, normalizer=normalizer)
    if kind == "mlp":
        return MlpCost.create(hidden_dim=hidden_dim, hidden_layers=hidden_layers,
                              rng=rng, normalizer=normalizer)
    if kind == "cnn":
        return ConvCost.create(horizon=horizon, rng=rng, normalizer=normalizer)
    raise ValueError(f"unknown cost kind {kind!r}")


def model_from_dict(d: dict) -> CostModel:
    kind = d["kind"]
    if kind not in _MODEL_KINDS:
        raise ValueError(f"unknown cost kind {kind!r}")
    normalizer = F.FeatureNormalizer.from_dict(d["normalizer"])
    params = np.array(d["params"], dtype=np.float64)
    cls = _MODEL_KINDS[kind]
    return cls(params, normalizer=normalizer, **d.get("config", {}))


# ---------------------------------------------------------------------------
# Cost / gradient pipeline over a Problem


@dataclass
class GradReport:
    value: float
    d_controls: np.ndarray  # (T, 2) w.r.t. absolute raw controls
    d_params: np.ndarray | None = None
    d_deltas: np.ndarray | None = None  # (T, 2) w.r.t. per-step control changes


def normalized_features(model: CostModel, states: np.ndarray, controls: np.ndarray, prob: Problem) -> np.ndarray:
    phi = F.frame_feature_matrix(states, controls, prob)
    return model.normalizer.normalize_features(phi)


def cost_value(model: CostModel, states: np.ndarray, controls: np.ndarray, prob: Problem) -> float:
    return model.value(normalized_features(model, states, controls, prob))


def feature_stage_backward(model: CostModel, states: np.ndarray, controls: np.ndarray,
                           prob: Problem):
    """Everything up to (but not including) the dynamics adjoint pass.

    Returns (value, gphi_raw (T,10), dx (T,4), du (T,2)): the energy, the
    cost sensitivity to raw features, and the direct per-frame cost
    gradients w.r.t. states and controls. The joint multi-agent solver
    adds cross-agent terms to dx before running the adjoint pass.
    """
    phi = F.frame_feature_matrix(states, controls, prob)
    phi_n = model.normalizer.normalize_features(phi)
    value = model.value(phi_n)
    gphi = model.frame_grad(phi_n) / model.normalizer.feature_div
    dpx, dpu, dpp = F.feature_gradients(states, controls, prob)
    dx, du = F.backward_through_features(gphi, dpx, dpu, dpp)
    return value, gphi, dx, du


def adjoint_control_grad(states: np.ndarray, controls: np.ndarray, prob: Problem,
                         dx: np.ndarray, du: np.ndarray) -> np.ndarray:
    """Backward-in-time accumulation of dC/du given direct frame gradients."""
    A, B = trajectory_jacobians(prob.x0, states, controls, prob.variant)
    return K.bptt(A, B, dx, du)


def energy_and_control_grad(model: CostModel, controls: np.ndarray, prob: Problem):
    """Energy and d(energy)/d(controls) for absolute raw controls (T, 2).

    This is the sampler's inner loop: unroll, per-frame features, model
    backward, then the adjoint pass through the dynamics Jacobians.
    """
    states = unroll_array(prob.x0, controls, prob.variant)
    value, _, dx, du = feature_stage_backward(model, states, controls, prob)
    d_controls = adjoint_control_grad(states, controls, prob, dx, du)
    return value, d_controls, states


def grad_wrt_controls(model: CostModel, seq: ControlSequence, prob: Problem,
                      with_params: bool = False) -> GradReport:
    """Full gradient report for a control sequence (absolute or delta mode)."""
    if seq.mode == "delta":
        controls = np.cumsum(seq.values, axis=0) + prob.anchor[None, :]
    else:
        controls = seq.values
    value, d_controls, states = energy_and_control_grad(model, controls, prob)
    d_deltas = np.cumsum(d_controls[::-1], axis=0)[::-1] if seq.mode == "delta" else None
    d_params = None
    if with_params:
        d_params = model.param_grad(normalized_features(model, states, controls, prob))
    return GradReport(value=value, d_controls=d_controls, d_params=d_params, d_deltas=d_deltas)


def grad_wrt_params(model: CostModel, states: np.ndarray, controls: np.ndarray, prob: Problem) -> np.ndarray:
    """d(cost)/d(theta); for the linear model this equals the normalized
    aggregate feature vector exactly."""
    return model.param_grad(normalized_features(model, states, controls, prob))
