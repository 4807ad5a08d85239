"""Hot numeric kernels: dynamics steps/rollouts, Jacobians, per-frame
feature values and gradients, and the backward-in-time adjoint pass.

Each kernel is a self-contained loop-based function over float64 arrays.
When numba is importable and the environment variable ``EBIOC_NUMBA`` is
not set to ``0``, the public names are ``@njit``-compiled versions; with
``EBIOC_NUMBA=0`` (or numba missing) the pure NumPy/Python originals are
used instead. The originals always remain reachable under ``*_py`` names
so tests and ``benchmarks/bench_kernels.py`` can compare both paths.

The step equations are intentionally inlined in ``unroll`` rather than
calling ``step``; tests pin the two against each other.
"""

from __future__ import annotations

import math
import os

import numpy as np

_flag = os.environ.get("EBIOC_NUMBA", "1").strip().lower()
NUMBA_REQUESTED = _flag not in ("0", "false", "off", "no")
try:
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    HAVE_NUMBA = False

USING_NUMBA = NUMBA_REQUESTED and HAVE_NUMBA

VARIANT_BICYCLE = 0  # standard kinematic bicycle (default)
VARIANT_BICYCLE_ALT = 1  # alternative published transcription, kept for comparison

ERR_NONE = 0
ERR_SQRT = 1  # negative radicand in the alt-variant radius term
ERR_ARCSIN = 2  # arcsin argument outside [-1, 1] in the alt-variant heading update
ERR_SPEED = 3  # zero speed makes the alt-variant curvature radius vanish
ERR_STEER = 4  # |steer| >= pi/2

N_FEATURES = 10


def _step(state, control, dt, wheelbase, variant):
    """One dynamics step. Returns (next_state (4,), err_code)."""
    out = np.empty(4, dtype=np.float64)
    x = state[0]
    y = state[1]
    v = state[2]
    h = state[3]
    a = control[0]
    s = control[1]
    if abs(s) >= 0.5 * math.pi:
        return out, ERR_STEER
    if variant == VARIANT_BICYCLE:
        out[0] = x + v * dt * math.cos(h)
        out[1] = y + v * dt * math.sin(h)
        out[2] = v + a * dt
        out[3] = h + (v * dt / wheelbase) * math.tan(s)
        return out, ERR_NONE
    # alternative transcription: swapped-axis position update driven by the
    # steering angle, plus an arcsin heading update with a v^2 radius term
    q = wheelbase * wheelbase - (h * dt * math.sin(s)) ** 2
    if q < 0.0:
        return out, ERR_SQRT
    r = wheelbase + v * dt * math.cos(s) - math.sqrt(q)
    if v == 0.0:
        return out, ERR_SPEED
    radius = 3.043 * v * v / 9.8
    g = math.sin(s) * v * dt / radius
    if g < -1.0 or g > 1.0:
        return out, ERR_ARCSIN
    out[0] = x + math.sin(s) * r
    out[1] = y + math.cos(s) * r
    out[2] = v + a * dt
    out[3] = h + math.asin(g)
    return out, ERR_NONE


def _unroll(x0, controls, dt, wheelbase, variant):
    """Roll controls (T, 2) forward from x0 (4,).

    Returns (states (T, 4), err_code, err_timestep); on error the states
    array is valid up to (not including) the offending index.
    """
    T = controls.shape[0]
    states = np.zeros((T, 4), dtype=np.float64)
    x = x0[0]
    y = x0[1]
    v = x0[2]
    h = x0[3]
    for i in range(T):
        a = controls[i, 0]
        s = controls[i, 1]
        if abs(s) >= 0.5 * math.pi:
            return states, ERR_STEER, i
        if variant == VARIANT_BICYCLE:
            x = x + v * dt * math.cos(h)
            y = y + v * dt * math.sin(h)
            h = h + (v * dt / wheelbase) * math.tan(s)
            v = v + a * dt
        else:
            q = wheelbase * wheelbase - (h * dt * math.sin(s)) ** 2
            if q < 0.0:
                return states, ERR_SQRT, i
            r = wheelbase + v * dt * math.cos(s) - math.sqrt(q)
            if v == 0.0:
                return states, ERR_SPEED, i
            radius = 3.043 * v * v / 9.8
            g = math.sin(s) * v * dt / radius
            if g < -1.0 or g > 1.0:
                return states, ERR_ARCSIN, i
            x = x + math.sin(s) * r
            y = y + math.cos(s) * r
            h = h + math.asin(g)
            v = v + a * dt
        states[i, 0] = x
        states[i, 1] = y
        states[i, 2] = v
        states[i, 3] = h
    return states, ERR_NONE, -1


def _jacobians(x0, states, controls, dt, wheelbase, variant):
    """Per-step dynamics Jacobians along a rollout.

    A[i] = d states[i] / d states[i-1] (states[-1] meaning x0) and
    B[i] = d states[i] / d controls[i]; both evaluated analytically.
    Returns (A (T, 4, 4), B (T, 4, 2), err_code, err_timestep).
    """
    T = controls.shape[0]
    A = np.zeros((T, 4, 4), dtype=np.float64)
    B = np.zeros((T, 4, 2), dtype=np.float64)
    for i in range(T):
        if i == 0:
            v = x0[2]
            h = x0[3]
        else:
            v = states[i - 1, 2]
            h = states[i - 1, 3]
        s = controls[i, 1]
        if abs(s) >= 0.5 * math.pi:
            return A, B, ERR_STEER, i
        if variant == VARIANT_BICYCLE:
            ch = math.cos(h)
            sh = math.sin(h)
            ts = math.tan(s)
            A[i, 0, 0] = 1.0
            A[i, 0, 2] = dt * ch
            A[i, 0, 3] = -v * dt * sh
            A[i, 1, 1] = 1.0
            A[i, 1, 2] = dt * sh
            A[i, 1, 3] = v * dt * ch
            A[i, 2, 2] = 1.0
            A[i, 3, 2] = dt * ts / wheelbase
            A[i, 3, 3] = 1.0
            B[i, 2, 0] = dt
            cs = math.cos(s)
            B[i, 3, 1] = v * dt / (wheelbase * cs * cs)
        else:
            ss = math.sin(s)
            cs = math.cos(s)
            q = wheelbase * wheelbase - (h * dt * ss) ** 2
            if q <= 0.0:
                return A, B, ERR_SQRT, i
            sq = math.sqrt(q)
            r = wheelbase + v * dt * cs - sq
            r_v = dt * cs
            r_h = h * dt * dt * ss * ss / sq
            r_s = -v * dt * ss + h * h * dt * dt * ss * cs / sq
            if v == 0.0:
                return A, B, ERR_SPEED, i
            coef = 9.8 * dt / 3.043
            g = coef * ss / v
            if g * g >= 1.0:
                return A, B, ERR_ARCSIN, i
            dasin = 1.0 / math.sqrt(1.0 - g * g)
            A[i, 0, 0] = 1.0
            A[i, 0, 2] = ss * r_v
            A[i, 0, 3] = ss * r_h
            A[i, 1, 1] = 1.0
            A[i, 1, 2] = cs * r_v
            A[i, 1, 3] = cs * r_h
            A[i, 2, 2] = 1.0
            A[i, 3, 2] = dasin * (-coef * ss / (v * v))
            A[i, 3, 3] = 1.0
            B[i, 2, 0] = dt
            B[i, 0, 1] = cs * r + ss * r_s
            B[i, 1, 1] = -ss * r + cs * r_s
            B[i, 3, 1] = dasin * coef * cs / v
    return A, B, ERR_NONE, -1


def _features(states, controls, anchor, lane, speed_limit, goal, obstacles, cap, temp):
    """Per-frame feature matrix (T, 10); ordering is frozen:

    0 dist_goal_lon    1 dist_goal_lat   2 dist_lane_center
    3 speed_limit_diff 4 lane_heading_diff
    5 accel_l2         6 steer_l2        7 accel_diff  8 steer_diff
    9 nearest_obstacle_dist

    Goal features are charged on the final frame only; the control-diff
    features are anchored at the last history control. The obstacle
    feature is a softmin over obstacle distances, hard-saturated at `cap`
    (and equal to `cap` when the scene has no obstacles) so that distant
    traffic decouples exactly.
    """
    T = states.shape[0]
    phi = np.zeros((T, N_FEATURES), dtype=np.float64)
    c0 = lane[0]
    c1 = lane[1]
    c2 = lane[2]
    c3 = lane[3]
    n_obs = obstacles.shape[0]
    for i in range(T):
        x = states[i, 0]
        y = states[i, 1]
        v = states[i, 2]
        h = states[i, 3]
        a = controls[i, 0]
        s = controls[i, 1]
        if i == 0:
            ap = anchor[0]
            sp = anchor[1]
        else:
            ap = controls[i - 1, 0]
            sp = controls[i - 1, 1]
        if i == T - 1:
            phi[i, 0] = abs(goal[0] - x)
            phi[i, 1] = abs(goal[1] - y)
        lane_y = c0 + x * (c1 + x * (c2 + x * c3))
        slope = c1 + x * (2.0 * c2 + 3.0 * c3 * x)
        phi[i, 2] = abs(y - lane_y)
        dv = v - speed_limit
        over = dv if dv > 0.0 else 0.0
        phi[i, 3] = over + 0.1 * abs(dv)
        phi[i, 4] = abs(h - math.atan(slope))
        phi[i, 5] = a * a
        phi[i, 6] = s * s
        phi[i, 7] = (a - ap) * (a - ap)
        phi[i, 8] = (s - sp) * (s - sp)
        if n_obs == 0:
            phi[i, 9] = cap
        else:
            m = 1e300
            for j in range(n_obs):
                dxo = x - obstacles[j, i, 0]
                dyo = y - obstacles[j, i, 1]
                d = math.sqrt(dxo * dxo + dyo * dyo)
                if d < m:
                    m = d
            if m >= cap:
                phi[i, 9] = cap
            else:
                ssum = 0.0
                for j in range(n_obs):
                    dxo = x - obstacles[j, i, 0]
                    dyo = y - obstacles[j, i, 1]
                    d = math.sqrt(dxo * dxo + dyo * dyo)
                    ssum += math.exp(-(d - m) / temp)
                phi[i, 9] = m - temp * math.log(ssum)
    return phi


def _feature_grads(states, controls, anchor, lane, speed_limit, goal, obstacles, cap, temp):
    """Analytic per-frame feature gradients.

    Returns (dpx (T, 10, 4), dpu (T, 10, 2), dpp (T, 10, 2)): derivatives of
    each feature at frame i with respect to states[i], controls[i] and
    controls[i-1] (the anchor at i = 0, so dpp[0] is unused by callers).
    """
    T = states.shape[0]
    dpx = np.zeros((T, N_FEATURES, 4), dtype=np.float64)
    dpu = np.zeros((T, N_FEATURES, 2), dtype=np.float64)
    dpp = np.zeros((T, N_FEATURES, 2), dtype=np.float64)
    c1 = lane[1]
    c2 = lane[2]
    c3 = lane[3]
    n_obs = obstacles.shape[0]
    for i in range(T):
        x = states[i, 0]
        y = states[i, 1]
        v = states[i, 2]
        h = states[i, 3]
        a = controls[i, 0]
        s = controls[i, 1]
        if i == 0:
            ap = anchor[0]
            sp = anchor[1]
        else:
            ap = controls[i - 1, 0]
            sp = controls[i - 1, 1]
        lane_y = lane[0] + x * (c1 + x * (c2 + x * c3))
        slope = c1 + x * (2.0 * c2 + 3.0 * c3 * x)
        curv = 2.0 * c2 + 6.0 * c3 * x
        if i == T - 1:
            rgx = goal[0] - x
            dpx[i, 0, 0] = -(1.0 if rgx > 0.0 else (-1.0 if rgx < 0.0 else 0.0))
            rgy = goal[1] - y
            dpx[i, 1, 1] = -(1.0 if rgy > 0.0 else (-1.0 if rgy < 0.0 else 0.0))
        rlane = y - lane_y
        slane = 1.0 if rlane > 0.0 else (-1.0 if rlane < 0.0 else 0.0)
        dpx[i, 2, 1] = slane
        dpx[i, 2, 0] = -slane * slope
        dv = v - speed_limit
        sdv = 1.0 if dv > 0.0 else (-1.0 if dv < 0.0 else 0.0)
        dpx[i, 3, 2] = (1.0 if dv > 0.0 else 0.0) + 0.1 * sdv
        rhead = h - math.atan(slope)
        shead = 1.0 if rhead > 0.0 else (-1.0 if rhead < 0.0 else 0.0)
        dpx[i, 4, 3] = shead
        dpx[i, 4, 0] = -shead * curv / (1.0 + slope * slope)
        dpu[i, 5, 0] = 2.0 * a
        dpu[i, 6, 1] = 2.0 * s
        dpu[i, 7, 0] = 2.0 * (a - ap)
        dpp[i, 7, 0] = -2.0 * (a - ap)
        dpu[i, 8, 1] = 2.0 * (s - sp)
        dpp[i, 8, 1] = -2.0 * (s - sp)
        if n_obs > 0:
            m = 1e300
            for j in range(n_obs):
                dx = x - obstacles[j, i, 0]
                dy = y - obstacles[j, i, 1]
                d = math.sqrt(dx * dx + dy * dy)
                if d < m:
                    m = d
            if m < cap and m > 1e-12:
                ssum = 0.0
                for j in range(n_obs):
                    dx = x - obstacles[j, i, 0]
                    dy = y - obstacles[j, i, 1]
                    d = math.sqrt(dx * dx + dy * dy)
                    ssum += math.exp(-(d - m) / temp)
                gx = 0.0
                gy = 0.0
                for j in range(n_obs):
                    dx = x - obstacles[j, i, 0]
                    dy = y - obstacles[j, i, 1]
                    d = math.sqrt(dx * dx + dy * dy)
                    w = math.exp(-(d - m) / temp) / ssum
                    gx += w * dx / d
                    gy += w * dy / d
                dpx[i, 9, 0] = gx
                dpx[i, 9, 1] = gy
    return dpx, dpu, dpp


def _obstacle_position_grads(states, obstacles, cap, temp):
    """Gradient of the nearest-obstacle feature w.r.t. each obstacle position.

    Returns dobs (T, n_obs, 2): d feature[i, 9] / d obstacles[j, i, :].
    Used by the joint multi-agent solver, where obstacles are the other
    agents' rollouts.
    """
    T = states.shape[0]
    n_obs = obstacles.shape[0]
    dobs = np.zeros((T, n_obs, 2), dtype=np.float64)
    if n_obs == 0:
        return dobs
    for i in range(T):
        x = states[i, 0]
        y = states[i, 1]
        m = 1e300
        for j in range(n_obs):
            dx = x - obstacles[j, i, 0]
            dy = y - obstacles[j, i, 1]
            d = math.sqrt(dx * dx + dy * dy)
            if d < m:
                m = d
        if m >= cap or m <= 1e-12:
            continue
        ssum = 0.0
        for j in range(n_obs):
            dx = x - obstacles[j, i, 0]
            dy = y - obstacles[j, i, 1]
            d = math.sqrt(dx * dx + dy * dy)
            ssum += math.exp(-(d - m) / temp)
        for j in range(n_obs):
            dx = x - obstacles[j, i, 0]
            dy = y - obstacles[j, i, 1]
            d = math.sqrt(dx * dx + dy * dy)
            w = math.exp(-(d - m) / temp) / ssum
            dobs[i, j, 0] = -w * dx / d
            dobs[i, j, 1] = -w * dy / d
    return dobs


def _ilqr_forward(x0, anchor, v_bar, states_bar, controls_bar, k_seq, K_seq, lr,
                  dt, wheelbase, variant, lim_a, lim_s):
    """Gain-feedback forward rollout for the control-augmented iLQR system.

    v_new[t] = v_bar[t] + lr k[t] + K[t] (s - s_bar), where s is the
    augmented state (x, u_prev) entering step t; controls saturate at the
    physical limits. Returns (v_new, states (T,4), controls (T,2), err, err_t).
    """
    T = v_bar.shape[0]
    v_new = np.zeros((T, 2), dtype=np.float64)
    states = np.zeros((T, 4), dtype=np.float64)
    controls = np.zeros((T, 2), dtype=np.float64)
    x = x0[0]
    y = x0[1]
    v = x0[2]
    h = x0[3]
    ua = anchor[0]
    us = anchor[1]
    for t in range(T):
        if t == 0:
            d0 = 0.0
            d1 = 0.0
            d2 = 0.0
            d3 = 0.0
            d4 = 0.0
            d5 = 0.0
        else:
            d0 = x - states_bar[t - 1, 0]
            d1 = y - states_bar[t - 1, 1]
            d2 = v - states_bar[t - 1, 2]
            d3 = h - states_bar[t - 1, 3]
            d4 = ua - controls_bar[t - 1, 0]
            d5 = us - controls_bar[t - 1, 1]
        for m in range(2):
            fb = (K_seq[t, m, 0] * d0 + K_seq[t, m, 1] * d1 + K_seq[t, m, 2] * d2
                  + K_seq[t, m, 3] * d3 + K_seq[t, m, 4] * d4 + K_seq[t, m, 5] * d5)
            v_new[t, m] = v_bar[t, m] + lr * k_seq[t, m] + fb
        ua = ua + v_new[t, 0]
        us = us + v_new[t, 1]
        if ua > lim_a:
            ua = lim_a
        elif ua < -lim_a:
            ua = -lim_a
        if us > lim_s:
            us = lim_s
        elif us < -lim_s:
            us = -lim_s
        if abs(us) >= 0.5 * math.pi:
            return v_new, states, controls, ERR_STEER, t
        if variant == VARIANT_BICYCLE:
            x = x + v * dt * math.cos(h)
            y = y + v * dt * math.sin(h)
            h = h + (v * dt / wheelbase) * math.tan(us)
            v = v + ua * dt
        else:
            q = wheelbase * wheelbase - (h * dt * math.sin(us)) ** 2
            if q < 0.0:
                return v_new, states, controls, ERR_SQRT, t
            r = wheelbase + v * dt * math.cos(us) - math.sqrt(q)
            if v == 0.0:
                return v_new, states, controls, ERR_SPEED, t
            radius = 3.043 * v * v / 9.8
            g = math.sin(us) * v * dt / radius
            if g < -1.0 or g > 1.0:
                return v_new, states, controls, ERR_ARCSIN, t
            x = x + math.sin(us) * r
            y = y + math.cos(us) * r
            h = h + math.asin(g)
            v = v + ua * dt
        states[t, 0] = x
        states[t, 1] = y
        states[t, 2] = v
        states[t, 3] = h
        controls[t, 0] = ua
        controls[t, 1] = us
    return v_new, states, controls, ERR_NONE, -1


def _contract_feature_grads(gphi, dpx, dpu, dpp):
    """dC/dphi (T, 10) times the feature gradient stacks.

    Returns (dx (T, 4), du (T, 2)); the control-difference features couple
    frame t to the control at t-1, hence the shifted dpp term.
    """
    T = gphi.shape[0]
    dx = np.zeros((T, 4), dtype=np.float64)
    du = np.zeros((T, 2), dtype=np.float64)
    for t in range(T):
        for j in range(4):
            acc = 0.0
            for k in range(N_FEATURES):
                acc += gphi[t, k] * dpx[t, k, j]
            dx[t, j] = acc
        for j in range(2):
            acc = 0.0
            for k in range(N_FEATURES):
                acc += gphi[t, k] * dpu[t, k, j]
            du[t, j] = acc
    for t in range(T - 1):
        for j in range(2):
            acc = 0.0
            for k in range(N_FEATURES):
                acc += gphi[t + 1, k] * dpp[t + 1, k, j]
            du[t, j] = du[t, j] + acc
    return dx, du


def _bptt(A, B, dx, du):
    """Reverse-accumulate trajectory cost gradients through the dynamics.

    dx[i] and du[i] are the direct cost gradients at frame i w.r.t.
    states[i] and controls[i]; A/B come from `jacobians`. Returns the
    total dC/du (T, 2) including all downstream state effects.
    """
    T = dx.shape[0]
    out = np.zeros((T, 2), dtype=np.float64)
    lam = np.zeros(4, dtype=np.float64)
    for k in range(4):
        lam[k] = dx[T - 1, k]
    for m in range(2):
        acc = du[T - 1, m]
        for k in range(4):
            acc += B[T - 1, k, m] * lam[k]
        out[T - 1, m] = acc
    for i in range(T - 2, -1, -1):
        nxt = np.zeros(4, dtype=np.float64)
        for k in range(4):
            acc = dx[i, k]
            for r in range(4):
                acc += A[i + 1, r, k] * lam[r]
            nxt[k] = acc
        lam = nxt
        for m in range(2):
            acc = du[i, m]
            for k in range(4):
                acc += B[i, k, m] * lam[k]
            out[i, m] = acc
    return out


# Pure-python/numpy implementations, always available.
step_py = _step
unroll_py = _unroll
jacobians_py = _jacobians
features_py = _features
feature_grads_py = _feature_grads
obstacle_position_grads_py = _obstacle_position_grads
ilqr_forward_py = _ilqr_forward
contract_feature_grads_py = _contract_feature_grads
bptt_py = _bptt

if USING_NUMBA:
    _jit = _njit(cache=True, nogil=True)
    step = _jit(_step)
    unroll = _jit(_unroll)
    jacobians = _jit(_jacobians)
    features = _jit(_features)
    feature_grads = _jit(_feature_grads)
    obstacle_position_grads = _jit(_obstacle_position_grads)
    ilqr_forward = _jit(_ilqr_forward)
    contract_feature_grads = _jit(_contract_feature_grads)
    bptt = _jit(_bptt)
else:
    step = _step
    unroll = _unroll
    jacobians = _jacobians
    features = _features
    feature_grads = _feature_grads
    obstacle_position_grads = _obstacle_position_grads
    ilqr_forward = _ilqr_forward
    contract_feature_grads = _contract_feature_grads
    bptt = _bptt


def _linear_grad_z(z, w, x0, anchor, lane, speed_limit, goal, obstacles, cap, temp,
                   dt, wheelbase, variant, cmean, cstd, lim):
    """Fused chain-space gradient for the linear cost.

    z is the chain variable (normalized per-step control changes); w is
    theta / feature_div. Replicates the generic objective path step for
    step (decode with saturation, unroll, features, contraction, adjoint
    pass, mask/scale/suffix-sum) so results are bit-identical to it.
    Returns (phi (T, 10) raw features, gz (T, 2), err, err_t); the energy
    is computed by the caller from phi.
    """
    T = z.shape[0]
    u = np.zeros((T, 2), dtype=np.float64)
    mask = np.zeros((T, 2), dtype=np.float64)
    acc0 = 0.0
    acc1 = 0.0
    a_norm0 = (anchor[0] - cmean[0]) / cstd[0]
    a_norm1 = (anchor[1] - cmean[1]) / cstd[1]
    for t in range(T):
        acc0 += z[t, 0]
        acc1 += z[t, 1]
        u0 = (acc0 + a_norm0) * cstd[0] + cmean[0]
        u1 = (acc1 + a_norm1) * cstd[1] + cmean[1]
        mask[t, 0] = 1.0 if abs(u0) <= lim[0] else 0.0
        mask[t, 1] = 1.0 if abs(u1) <= lim[1] else 0.0
        if u0 > lim[0]:
            u0 = lim[0]
        elif u0 < -lim[0]:
            u0 = -lim[0]
        if u1 > lim[1]:
            u1 = lim[1]
        elif u1 < -lim[1]:
            u1 = -lim[1]
        u[t, 0] = u0
        u[t, 1] = u1
    states, err, err_t = unroll(x0, u, dt, wheelbase, variant)
    phi = np.zeros((T, N_FEATURES), dtype=np.float64)
    gz = np.zeros((T, 2), dtype=np.float64)
    if err != ERR_NONE:
        return phi, gz, err, err_t
    phi = features(states, u, anchor, lane, speed_limit, goal, obstacles, cap, temp)
    gphi = np.zeros((T, N_FEATURES), dtype=np.float64)
    for t in range(T):
        for k in range(N_FEATURES):
            gphi[t, k] = w[k]
    dpx, dpu, dpp = feature_grads(states, u, anchor, lane, speed_limit, goal,
                                  obstacles, cap, temp)
    dx, du = contract_feature_grads(gphi, dpx, dpu, dpp)
    A, B, err, err_t = jacobians(x0, states, u, dt, wheelbase, variant)
    if err != ERR_NONE:
        return phi, gz, err, err_t
    g_raw = bptt(A, B, dx, du)
    # mask saturated components, scale to normalized units, suffix-sum to
    # chain coordinates (accumulating from the end, like cumsum on the
    # reversed array)
    s0 = 0.0
    s1 = 0.0
    for t in range(T - 1, -1, -1):
        s0 += g_raw[t, 0] * mask[t, 0] * cstd[0]
        s1 += g_raw[t, 1] * mask[t, 1] * cstd[1]
        gz[t, 0] = s0
        gz[t, 1] = s1
    return phi, gz, err, err_t


def _linear_phi_z(z, x0, anchor, lane, speed_limit, goal, obstacles, cap, temp,
                  dt, wheelbase, variant, cmean, cstd, lim):
    """Decode + unroll + features only (the energy-evaluation half of
    `_linear_grad_z`), for line-search trial points."""
    T = z.shape[0]
    u = np.zeros((T, 2), dtype=np.float64)
    acc0 = 0.0
    acc1 = 0.0
    a_norm0 = (anchor[0] - cmean[0]) / cstd[0]
    a_norm1 = (anchor[1] - cmean[1]) / cstd[1]
    for t in range(T):
        acc0 += z[t, 0]
        acc1 += z[t, 1]
        u0 = (acc0 + a_norm0) * cstd[0] + cmean[0]
        u1 = (acc1 + a_norm1) * cstd[1] + cmean[1]
        if u0 > lim[0]:
            u0 = lim[0]
        elif u0 < -lim[0]:
            u0 = -lim[0]
        if u1 > lim[1]:
            u1 = lim[1]
        elif u1 < -lim[1]:
            u1 = -lim[1]
        u[t, 0] = u0
        u[t, 1] = u1
    states, err, err_t = unroll(x0, u, dt, wheelbase, variant)
    if err != ERR_NONE:
        return np.zeros((T, N_FEATURES), dtype=np.float64), err, err_t
    phi = features(states, u, anchor, lane, speed_limit, goal, obstacles, cap, temp)
    return phi, err, err_t


linear_grad_z_py = _linear_grad_z
linear_phi_z_py = _linear_phi_z
if USING_NUMBA:
    linear_grad_z = _jit(_linear_grad_z)
    linear_phi_z = _jit(_linear_phi_z)
else:
    linear_grad_z = _linear_grad_z
    linear_phi_z = _linear_phi_z
