"""Trajectory solvers: Langevin sampling, gradient descent, and iLQR.

Langevin and GD operate in normalized delta-control space: the chain
variable z is the per-step change of the normalized controls, anchored at
the (normalized) last history control. Each chain increment is clamped
per component, noise included, which keeps the dynamics well inside its
domain. iLQR works on raw per-step control changes over the control-
augmented state so the first-difference smoothness features stay
per-frame.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import cost as C
from .dynamics import trajectory_jacobians, unroll_array
from .problem import Problem
from .types import ControlSequence, Trajectory

SOLVER_KINDS = ("langevin", "gd", "ilqr")


@dataclass(frozen=True)
class SamplerConfig:
    kind: str = "langevin"
    steps: int = 64
    step_size: float = 0.1
    clamp: float | None = 0.1  # per-step increment limit, normalized units; None disables
    noise_scale: float | None = None  # defaults to step_size for langevin, 0 for gd
    backtracking: bool = True  # gd only; halve the step when the energy increases
    record_trace: bool = False
    ilqr_lr_min: float = 0.001
    ilqr_lr_max: float = 1.0
    ilqr_lr_num: int = 13
    ilqr_max_iter: int = 100
    ilqr_early_stop: float = 0.001

    def __post_init__(self):
        if self.kind not in SOLVER_KINDS:
            raise ValueError(f"unknown solver kind {self.kind!r}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.clamp is not None and not self.clamp > 0:
            raise ValueError("clamp must be positive (or None)")

    @property
    def effective_noise(self) -> float:
        if self.noise_scale is not None:
            return self.noise_scale
        return self.step_size if self.kind == "langevin" else 0.0


@dataclass
class SolverResult:
    controls: ControlSequence  # absolute raw controls
    trajectory: Trajectory
    energy_trace: np.ndarray  # (steps+1,) or per-iteration for ilqr
    accepted_steps: int
    wall_time: float
    control_trace: np.ndarray | None = None  # (steps+1, T, 2) raw, when recorded
    converged: bool | None = None  # ilqr early-stop flag


def export_energy_trace(result: SolverResult, path) -> None:
    """Write (step, energy) CSV for plotting chain behavior."""
    with open(path, "w") as f:
        f.write("step,energy\n")
        for i, e in enumerate(result.energy_trace):
            f.write(f"{i},{e!r}\n")


# ---------------------------------------------------------------------------
# Chain cores over an abstract objective: value_and_grad(z) -> (E, dE/dz)


@dataclass
class ChainResult:
    z: np.ndarray
    energies: np.ndarray
    z_trace: np.ndarray | None
    accepted: int


def langevin_chain(value_and_grad, z0: np.ndarray, cfg: SamplerConfig,
                   rng: np.random.Generator) -> ChainResult:
    """Unadjusted Langevin: z' = z - (d^2/2) grad + d * noise, increments
    clamped per component when cfg.clamp is set."""
    z = np.array(z0, dtype=np.float64)
    delta = cfg.step_size
    noise = cfg.effective_noise
    energies = np.zeros(cfg.steps + 1)
    trace = np.zeros((cfg.steps + 1,) + z.shape) if cfg.record_trace else None
    if trace is not None:
        trace[0] = z
    for s in range(cfg.steps):
        e, g = value_and_grad(z)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite energy gradient at chain step {s}")
        energies[s] = e
        inc = -0.5 * delta * delta * g + noise * rng.standard_normal(z.shape)
        if cfg.clamp is not None:
            inc = np.clip(inc, -cfg.clamp, cfg.clamp)
        z = z + inc
        if trace is not None:
            trace[s + 1] = z
    energies[cfg.steps], _ = value_and_grad(z)
    return ChainResult(z=z, energies=energies, z_trace=trace, accepted=cfg.steps)


def gd_chain(value_and_grad, z0: np.ndarray, cfg: SamplerConfig,
             value_fn=None) -> ChainResult:
    """Clamped gradient descent; with backtracking the step is halved until
    the energy does not increase (so the final energy never exceeds the
    initial one), matching the strict fixed-step update otherwise.

    A step that cannot decrease the energy even at the smallest trial
    size ends the chain early: the remaining deterministic steps would
    repeat the same rejection. Trial points are scored with the cheaper
    `value_fn` when provided.
    """
    if value_fn is None:
        value_fn = lambda zz: value_and_grad(zz)[0]
    z = np.array(z0, dtype=np.float64)
    energies = np.zeros(cfg.steps + 1)
    trace = np.zeros((cfg.steps + 1,) + z.shape) if cfg.record_trace else None
    if trace is not None:
        trace[0] = z
    accepted = 0
    e_cur, g = value_and_grad(z)
    stalled = False
    for s in range(cfg.steps):
        energies[s] = e_cur
        if stalled:
            if trace is not None:
                trace[s + 1] = z
            continue
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite energy gradient at chain step {s}")
        eta = cfg.step_size
        moved = False
        if cfg.backtracking:
            for _ in range(16):
                inc = -eta * g
                if cfg.clamp is not None:
                    inc = np.clip(inc, -cfg.clamp, cfg.clamp)
                e_new = value_fn(z + inc)
                if e_new <= e_cur:
                    z = z + inc
                    e_cur, g = value_and_grad(z)
                    moved = True
                    break
                eta *= 0.5
            if not moved:
                stalled = True
        else:
            inc = -eta * g
            if cfg.clamp is not None:
                inc = np.clip(inc, -cfg.clamp, cfg.clamp)
            z = z + inc
            e_cur, g = value_and_grad(z)
            moved = True
        if moved:
            accepted += 1
        if trace is not None:
            trace[s + 1] = z
    energies[cfg.steps] = e_cur
    return ChainResult(z=z, energies=energies, z_trace=trace, accepted=accepted)


# ---------------------------------------------------------------------------
# Driving objective: energy over normalized delta controls


@dataclass
class ControlCodec:
    """Maps between the chain variable (normalized per-step changes) and
    raw absolute controls. Decoding saturates at the physical control
    bounds; gradients of saturated components are zeroed to match."""

    mean: np.ndarray
    std: np.ndarray
    anchor_raw: np.ndarray
    limits: np.ndarray  # (2,) |accel|, |steer| caps

    @classmethod
    def for_model(cls, model: C.CostModel, prob: Problem) -> "ControlCodec":
        n = model.normalizer
        return cls(mean=n.control_mean, std=n.control_std, anchor_raw=prob.anchor,
                   limits=prob.bounds.as_array())

    @property
    def anchor_norm(self) -> np.ndarray:
        return (self.anchor_raw - self.mean) / self.std

    def z_to_raw(self, z: np.ndarray) -> np.ndarray:
        nu = np.cumsum(z, axis=0) + self.anchor_norm[None, :]
        u = nu * self.std[None, :] + self.mean[None, :]
        return np.clip(u, -self.limits, self.limits)

    def z_to_raw_with_mask(self, z: np.ndarray):
        nu = np.cumsum(z, axis=0) + self.anchor_norm[None, :]
        u = nu * self.std[None, :] + self.mean[None, :]
        mask = np.abs(u) <= self.limits
        return np.clip(u, -self.limits, self.limits), mask

    def raw_to_z(self, u: np.ndarray) -> np.ndarray:
        nu = (u - self.mean[None, :]) / self.std[None, :]
        return np.diff(nu, axis=0, prepend=self.anchor_norm[None, :])

    def grad_to_z(self, g_raw: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        if mask is not None:
            g_raw = np.where(mask, g_raw, 0.0)
        g_nu = g_raw * self.std[None, :]
        return np.cumsum(g_nu[::-1], axis=0)[::-1]


class DrivingObjective:
    """Energy in chain coordinates for one (model, scene) pair.

    Linear costs take a fused-kernel fast path; it computes bit-identical
    values and gradients to the generic route (tests pin this).
    """

    def __init__(self, model: C.CostModel, prob: Problem):
        self.model = model
        self.prob = prob
        self.codec = ControlCodec.for_model(model, prob)
        self._fused = isinstance(model, C.LinearCost)
        if self._fused:
            self._w = model.weights / model.normalizer.feature_div

    def value_and_grad(self, z: np.ndarray):
        if self._fused:
            from . import _kernels as K
            from .dynamics import DynamicsDomainError

            prob = self.prob
            phi, gz, err, err_t = K.linear_grad_z(
                np.ascontiguousarray(z), self._w, prob.x0, prob.anchor, prob.lane,
                prob.speed_limit, prob.goal, prob.obstacles, prob.obstacle_cap,
                prob.obstacle_temp, prob.variant.dt, prob.variant.wheelbase,
                prob.variant.code, self.codec.mean, self.codec.std, self.codec.limits)
            if err != 0:
                raise DynamicsDomainError(err, err_t)
            phi_n = phi / self.model.normalizer.feature_div
            e = float(phi_n.sum(axis=0) @ self.model.weights)
            return e, gz
        u, mask = self.codec.z_to_raw_with_mask(z)
        e, g_raw, _ = C.energy_and_control_grad(self.model, u, self.prob)
        return e, self.codec.grad_to_z(g_raw, mask)

    def value(self, z: np.ndarray) -> float:
        if self._fused:
            from . import _kernels as K
            from .dynamics import DynamicsDomainError

            prob = self.prob
            phi, err, err_t = K.linear_phi_z(
                np.ascontiguousarray(z), prob.x0, prob.anchor, prob.lane,
                prob.speed_limit, prob.goal, prob.obstacles, prob.obstacle_cap,
                prob.obstacle_temp, prob.variant.dt, prob.variant.wheelbase,
                prob.variant.code, self.codec.mean, self.codec.std, self.codec.limits)
            if err != 0:
                raise DynamicsDomainError(err, err_t)
            phi_n = phi / self.model.normalizer.feature_div
            return float(phi_n.sum(axis=0) @ self.model.weights)
        u = self.codec.z_to_raw(z)
        states = unroll_array(self.prob.x0, u, self.prob.variant)
        return C.cost_value(self.model, states, u, self.prob)


def _initial_z(init: ControlSequence | np.ndarray | None, codec: ControlCodec, T: int) -> np.ndarray:
    if init is None:
        return np.zeros((T, 2))
    if isinstance(init, ControlSequence):
        if init.mode == "delta":
            u = np.cumsum(init.values, axis=0) + codec.anchor_raw[None, :]
        else:
            u = init.values
    else:
        u = np.asarray(init, dtype=np.float64)
    return codec.raw_to_z(u)


def _finish(objective: DrivingObjective, chain: ChainResult, t0: float,
            converged=None) -> SolverResult:
    u = objective.codec.z_to_raw(chain.z)
    states = unroll_array(objective.prob.x0, u, objective.prob.variant)
    seq = ControlSequence(u)
    control_trace = None
    if chain.z_trace is not None:
        control_trace = np.stack([objective.codec.z_to_raw(zs) for zs in chain.z_trace])
    return SolverResult(
        controls=seq,
        trajectory=Trajectory(states=states, controls=seq),
        energy_trace=chain.energies,
        accepted_steps=chain.accepted,
        wall_time=time.perf_counter() - t0,
        control_trace=control_trace,
        converged=converged,
    )


def langevin_sample(model: C.CostModel, init, prob: Problem, cfg: SamplerConfig,
                    rng: np.random.Generator) -> SolverResult:
    """Sample controls from exp(-cost) by Langevin dynamics, starting at
    `init` (None = zero changes, i.e. hold the anchor control)."""
    t0 = time.perf_counter()
    obj = DrivingObjective(model, prob)
    z0 = _initial_z(init, obj.codec, prob.horizon)
    chain = langevin_chain(obj.value_and_grad, z0, cfg, rng)
    return _finish(obj, chain, t0)


def gd_optimize(model: C.CostModel, init, prob: Problem, cfg: SamplerConfig) -> SolverResult:
    """Minimize the cost by clamped gradient descent from `init`."""
    t0 = time.perf_counter()
    obj = DrivingObjective(model, prob)
    z0 = _initial_z(init, obj.codec, prob.horizon)
    chain = gd_chain(obj.value_and_grad, z0, cfg, value_fn=obj.value)
    return _finish(obj, chain, t0)


# ---------------------------------------------------------------------------
# iLQR over the control-augmented system
#
# Augmented state s = (x, u) in R^6, control variable v = per-step change
# of u, transition F(s, v) = (f(x, u + v), u + v). Per-frame costs read
# (x_t, u_t, u_{t-1}) = (s[:4], s[4:6], s[4:6] - v), which keeps the
# smoothness features Markovian.


class QuadraticProvider:
    """Per-frame cost interface the backward pass consumes.

    value(t, s, v) -> float and quad(t, s, v) ->
    (c, q_s (6,), q_v (2,), H_ss (6,6), H_sv (6,2), H_vv (2,2)).
    """

    def value(self, t, s, v):  # pragma: no cover - interface
        raise NotImplementedError

    def quad(self, t, s, v):  # pragma: no cover - interface
        raise NotImplementedError


class DrivingQuadraticProvider(QuadraticProvider):
    """Gauss-Newton quadraticization of the driving cost.

    The exact per-frame gradient is used; curvature comes from the
    squared-residual feature atoms (control magnitudes and differences),
    which is the only PSD-by-construction second-order information the
    feature set offers. Remaining curvature is handled by Levenberg
    regularization in the backward pass.
    """

    def __init__(self, model: C.CostModel, prob: Problem):
        if not model.markovian:
            raise C.UnsupportedModelError(
                f"{model.kind} cost is non-Markovian and cannot be solved per-frame"
            )
        self.model = model
        self.prob = prob
        self._cache_key = None
        self._cache = None

    def _frame_data(self, states, controls):
        from . import features as F

        phi = F.frame_feature_matrix(states, controls, self.prob)
        phi_n = self.model.normalizer.normalize_features(phi)
        gphi = self.model.frame_grad(phi_n) / self.model.normalizer.feature_div
        dpx, dpu, dpp = F.feature_gradients(states, controls, self.prob)
        frame_costs = self.model.frame_values(phi_n)
        return phi, gphi, dpx, dpu, dpp, frame_costs

    def prepare(self, states: np.ndarray, controls: np.ndarray, v: np.ndarray):
        self._cache = self._frame_data(states, controls)
        self._states = states
        self._controls = controls
        self._v = v

    def total_cost(self, states, controls) -> float:
        return C.cost_value(self.model, states, controls, self.prob)

    def quad(self, t, s, v):
        phi, gphi, dpx, dpu, dpp, frame_costs = self._cache
        w = gphi[t]  # (10,) dC/dphi_raw at frame t
        q_s = np.zeros(6)
        q_v = np.zeros(2)
        q_s[:4] = dpx[t].T @ w
        q_s[4:] = dpu[t].T @ w + dpp[t].T @ w
        q_v = -(dpp[t].T @ w)
        H_ss = np.zeros((6, 6))
        H_vv = np.zeros((2, 2))
        H_sv = np.zeros((6, 2))
        # exact curvature of the squared control atoms
        H_ss[4, 4] += 2.0 * w[5]
        H_ss[5, 5] += 2.0 * w[6]
        H_vv[0, 0] += 2.0 * w[7]
        H_vv[1, 1] += 2.0 * w[8]
        # Gauss-Newton surrogate for the absolute-residual atoms (goal,
        # lane, speed, heading): J J^T scaled by the positive part of the
        # weight; keeps the quadratic model PSD while giving the state
        # block usable curvature.
        for k in (0, 1, 2, 3, 4):
            wk = w[k]
            if wk > 0.0:
                J = dpx[t, k, :4]
                H_ss[:4, :4] += (wk / max(phi[t, k], 1.0)) * np.outer(J, J)
        return float(frame_costs[t]), q_s, q_v, H_ss, H_sv, H_vv


@dataclass
class IlqrResult:
    v: np.ndarray  # (T, 2) control changes
    s_traj: np.ndarray  # (T, 6) augmented states after each step
    cost_trace: np.ndarray
    iterations: int
    converged: bool


def ilqr_core(step_fn, jac_fn, provider, s0: np.ndarray, v_init: np.ndarray,
              total_cost_fn, cfg: SamplerConfig,
              rollout_gains_fn=None, linearize_fn=None) -> IlqrResult:
    """Generic iLQR: linearize, Riccati backward pass, line-searched
    forward rollout; Levenberg regularization keeps Quu positive definite.

    `rollout_gains_fn` / `linearize_fn` are optional fast paths (the
    driving solver supplies kernel-backed ones); the defaults loop over
    step_fn / jac_fn.
    """
    T, m = v_init.shape
    n = s0.shape[0]

    def rollout(v_seq):
        s = s0
        traj = np.zeros((T, n))
        for t in range(T):
            s = step_fn(s, v_seq[t])
            traj[t] = s
        return traj

    def rollout_gains(v_bar, s_bar, k_seq, K_seq, lr):
        v_new = np.zeros_like(v_bar)
        traj = np.zeros((T, n))
        s = s0
        s_prev_bar = s0
        for t in range(T):
            v_new[t] = v_bar[t] + lr * k_seq[t] + K_seq[t] @ (s - s_prev_bar)
            s_new = step_fn(s, v_new[t])
            traj[t] = s_new
            s_prev_bar = s_bar[t]
            s = s_new
        return v_new, traj

    if rollout_gains_fn is None:
        rollout_gains_fn = rollout_gains

    def linearize(s_traj, v_seq):
        Fs = np.zeros((T, n, n))
        Fv = np.zeros((T, n, m))
        s_prev = s0
        for t in range(T):
            Fs[t], Fv[t] = jac_fn(s_prev, v_seq[t])
            s_prev = s_traj[t]
        return Fs, Fv

    if linearize_fn is None:
        linearize_fn = linearize

    v = np.array(v_init, dtype=np.float64)
    s_traj = rollout(v)
    cost = total_cost_fn(s_traj, v)
    costs = [cost]
    lam = 0.0
    converged = False
    failures = 0
    lrs = np.geomspace(cfg.ilqr_lr_max, cfg.ilqr_lr_min, cfg.ilqr_lr_num)
    it = 0
    for it in range(1, cfg.ilqr_max_iter + 1):
        provider.prepare(s_traj[:, :4], s_traj[:, 4:6], v)
        Fs, Fv = linearize_fn(s_traj, v)

        for _ in range(12):  # Levenberg retries
            Vx = np.zeros(n)
            Vxx = np.zeros((n, n))
            k_seq = np.zeros((T, m))
            K_seq = np.zeros((T, m, n))
            expected_drop = 0.0  # linear term of the model's predicted decrease
            ok = True
            for t in range(T - 1, -1, -1):
                _, q_s, q_v, H_ss, H_sv, H_vv = provider.quad(t, s_traj[t], v[t])
                cs = q_s + Vx
                Css = H_ss + Vxx
                Qv = q_v + Fv[t].T @ cs
                Qx = Fs[t].T @ cs
                Qvv = H_vv + Fv[t].T @ Css @ Fv[t] + Fv[t].T @ H_sv + H_sv.T @ Fv[t]
                Qxv = Fs[t].T @ Css @ Fv[t] + Fs[t].T @ H_sv
                Qxx = Fs[t].T @ Css @ Fs[t]
                Qvv_reg = Qvv + lam * np.eye(m)
                try:
                    np.linalg.cholesky(Qvv_reg)
                except np.linalg.LinAlgError:
                    ok = False
                    break
                rhs = np.column_stack([Qv, Qxv.T])
                sol = np.linalg.solve(Qvv_reg, rhs)
                k_seq[t] = -sol[:, 0]
                K_seq[t] = -sol[:, 1:].reshape(m, n)
                expected_drop += float(-k_seq[t] @ Qv)
                Vx = Qx + K_seq[t].T @ Qvv @ k_seq[t] + K_seq[t].T @ Qv + Qxv @ k_seq[t]
                Vxx = Qxx + K_seq[t].T @ Qvv @ K_seq[t] + K_seq[t].T @ Qxv.T + Qxv @ K_seq[t]
                Vxx = 0.5 * (Vxx + Vxx.T)
            if ok:
                break
            lam = max(2.0 * lam, 1e-6)
        if not ok:
            break
        if abs(expected_drop) < cfg.ilqr_early_stop:
            # the quadratic model itself predicts a sub-tolerance decrease
            costs.append(cost)
            converged = True
            break

        best_cost = cost
        best = None
        for lr in lrs:
            v_try, traj_try = rollout_gains_fn(v, s_traj, k_seq, K_seq, lr)
            if traj_try is None:
                continue
            c_try = total_cost_fn(traj_try, v_try)
            if np.isfinite(c_try) and c_try < best_cost:
                best_cost = c_try
                best = (v_try, traj_try)
        if best is None:
            # no learning rate improves the cost: either the quadratic model
            # is off (retry stiffer) or we are at a minimum (improvement 0)
            failures += 1
            lam = max(2.0 * lam, 1e-6)
            costs.append(cost)
            if failures >= 3 or lam > 1e8:
                converged = True
                break
            continue
        failures = 0
        improvement = cost - best_cost
        v, s_traj = best
        cost = best_cost
        costs.append(cost)
        lam = lam * 0.5 if lam > 1e-9 else 0.0
        if improvement < cfg.ilqr_early_stop:
            converged = True
            break

    return IlqrResult(v=v, s_traj=s_traj, cost_trace=np.array(costs),
                      iterations=it, converged=converged)


def _augmented_fns(prob: Problem):
    from . import _kernels as K

    var = prob.variant
    lim = prob.bounds.as_array()

    def step_fn(s, v):
        u = np.clip(s[4:6] + v, -lim, lim)
        nxt, err = K.step(s[:4], u, var.dt, var.wheelbase, var.code)
        if err != 0:
            raise FloatingPointError("dynamics domain error during iLQR rollout")
        out = np.empty(6)
        out[:4] = nxt
        out[4:] = u
        return out

    def jac_fn(s, v):
        u = np.clip(s[4:6] + v, -lim, lim)
        states, err, _ = K.unroll(s[:4], u[None, :], var.dt, var.wheelbase, var.code)
        A, B, err, _ = K.jacobians(s[:4], states, u[None, :], var.dt, var.wheelbase, var.code)
        Fs = np.zeros((6, 6))
        Fv = np.zeros((6, 2))
        Fs[:4, :4] = A[0]
        Fs[:4, 4:] = B[0]
        Fs[4:, 4:] = np.eye(2)
        Fv[:4] = B[0]
        Fv[4:] = np.eye(2)
        return Fs, Fv

    return step_fn, jac_fn


def ilqr_solve(model: C.CostModel, init, prob: Problem, cfg: SamplerConfig) -> SolverResult:
    """Minimize the driving cost with iLQR (Markovian cost kinds only)."""
    from . import _kernels as K

    t0 = time.perf_counter()
    provider = DrivingQuadraticProvider(model, prob)
    step_fn, jac_fn = _augmented_fns(prob)
    s0 = np.concatenate([prob.x0, prob.anchor])
    var = prob.variant
    lim = prob.bounds.as_array()

    if init is None:
        v0 = np.zeros((prob.horizon, 2))
    else:
        u0 = init.values if isinstance(init, ControlSequence) else np.asarray(init)
        if isinstance(init, ControlSequence) and init.mode == "delta":
            v0 = np.array(u0, dtype=np.float64)
        else:
            v0 = np.diff(u0, axis=0, prepend=prob.anchor[None, :])

    def total_cost_fn(s_traj, v_seq):
        return provider.total_cost(s_traj[:, :4], s_traj[:, 4:6])

    def rollout_gains_fn(v_bar, s_bar, k_seq, K_seq, lr):
        v_new, states, controls, err, _ = K.ilqr_forward(
            prob.x0, prob.anchor, v_bar, np.ascontiguousarray(s_bar[:, :4]),
            np.ascontiguousarray(s_bar[:, 4:6]), k_seq, K_seq, lr,
            var.dt, var.wheelbase, var.code, lim[0], lim[1])
        if err != 0:
            return v_new, None
        return v_new, np.hstack([states, controls])

    def linearize_fn(s_traj, v_seq):
        T = v_seq.shape[0]
        controls = s_traj[:, 4:6]
        A, B = trajectory_jacobians(prob.x0, np.ascontiguousarray(s_traj[:, :4]),
                                    np.ascontiguousarray(controls), var)
        Fs = np.zeros((T, 6, 6))
        Fv = np.zeros((T, 6, 2))
        Fs[:, :4, :4] = A
        Fs[:, :4, 4:] = B
        Fs[:, 4, 4] = 1.0
        Fs[:, 5, 5] = 1.0
        Fv[:, :4, :] = B
        Fv[:, 4, 0] = 1.0
        Fv[:, 5, 1] = 1.0
        return Fs, Fv

    res = ilqr_core(step_fn, jac_fn, provider, s0, v0, total_cost_fn, cfg,
                    rollout_gains_fn=rollout_gains_fn, linearize_fn=linearize_fn)
    u = res.s_traj[:, 4:6]
    seq = ControlSequence(u)
    states = res.s_traj[:, :4]
    return SolverResult(
        controls=seq,
        trajectory=Trajectory(states=states, controls=seq),
        energy_trace=res.cost_trace,
        accepted_steps=res.iterations,
        wall_time=time.perf_counter() - t0,
        converged=res.converged,
    )


def solve(model: C.CostModel, init, prob: Problem, cfg: SamplerConfig,
          rng: np.random.Generator | None = None) -> SolverResult:
    """Dispatch on cfg.kind."""
    if cfg.kind == "langevin":
        if rng is None:
            raise ValueError("langevin sampling needs an rng")
        return langevin_sample(model, init, prob, cfg, rng)
    if cfg.kind == "gd":
        return gd_optimize(model, init, prob, cfg)
    if cfg.kind == "ilqr":
        return ilqr_solve(model, init, prob, cfg)
    raise ValueError(f"unknown solver kind {cfg.kind!r}")
