#!/usr/bin/env python3
"""Times the hot kernels on the compiled (numba) path against the
pure-python/numpy originals. Run with EBIOC_NUMBA=0 to confirm the
package itself falls back cleanly; this script always times both
implementations in-process.

Usage: python benchmarks/bench_kernels.py [--repeat 200]
"""

import argparse
import time

import numpy as np

from ebioc import _kernels as K
from ebioc.rng import substream


def make_scene(T=40, n_obs=2):
    rng = substream(0, "bench")
    x0 = np.array([0.0, 0.0, 10.0, 0.02])
    anchor = np.array([0.1, 0.01])
    controls = rng.normal(0, 0.3, (T, 2)) * np.array([1.0, 0.05])
    lane = np.array([0.3, 0.01, 1e-4, -1e-6])
    goal = np.array([40.0, 1.0])
    obstacles = np.zeros((n_obs, T, 2))
    for j in range(n_obs):
        obstacles[j, :, 0] = 15.0 + 10 * j + 8.0 * np.arange(1, T + 1) * 0.1
        obstacles[j, :, 1] = 1.5 * (j - 0.5)
    return x0, anchor, controls, lane, goal, obstacles


def timeit(fn, args, repeat):
    fn(*args)  # warm-up / compile
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--horizon", type=int, default=40)
    args = ap.parse_args()

    x0, anchor, controls, lane, goal, obstacles = make_scene(args.horizon)
    dt, L, var = 0.1, 3.0, K.VARIANT_BICYCLE
    states, _, _ = K.unroll_py(x0, controls, dt, L, var)
    A, B, _, _ = K.jacobians_py(x0, states, controls, dt, L, var)
    feat_args = (states, controls, anchor, lane, 12.0, goal, obstacles, 50.0, 1.0)
    gphi = np.ones((args.horizon, 10))
    dpx, dpu, dpp = K.feature_grads_py(*feat_args)
    dx = np.ones((args.horizon, 4))
    du = np.ones((args.horizon, 2))
    z = np.zeros((args.horizon, 2))
    w = np.ones(10)
    chain_args = (z, w, x0, anchor, lane, 12.0, goal, obstacles, 50.0, 1.0, dt, L, var,
                  np.zeros(2), np.ones(2), np.array([5.0, 0.6]))

    cases = [
        ("unroll", K.unroll, K.unroll_py, (x0, controls, dt, L, var)),
        ("jacobians", K.jacobians, K.jacobians_py, (x0, states, controls, dt, L, var)),
        ("features", K.features, K.features_py, feat_args),
        ("feature_grads", K.feature_grads, K.feature_grads_py, feat_args),
        ("contract", K.contract_feature_grads, K.contract_feature_grads_py,
         (gphi, dpx, dpu, dpp)),
        ("bptt", K.bptt, K.bptt_py, (A, B, dx, du)),
        ("linear_grad_z", K.linear_grad_z, K.linear_grad_z_py, chain_args),
    ]

    print(f"horizon={args.horizon}, repeat={args.repeat}, numba enabled: {K.USING_NUMBA}")
    print(f"{'kernel':<16}{'compiled':>12}{'pure python':>14}{'speedup':>9}")
    for name, fast, slow, fargs in cases:
        t_fast = timeit(fast, fargs, args.repeat)
        t_slow = timeit(slow, fargs, max(args.repeat // 10, 5))
        ratio = t_slow / t_fast if t_fast > 0 else float("inf")
        print(f"{name:<16}{t_fast * 1e6:>10.1f}us{t_slow * 1e6:>12.1f}us{ratio:>8.1f}x")
        if not K.USING_NUMBA:
            assert fast is slow  # fallback path: both names are the same function


if __name__ == "__main__":
    main()
