#!/usr/bin/env python3
"""Time every hot kernel under both backends at training shapes.

Run after changing kernels or moving to new hardware; the numbers justify
the per-kernel choices in freqflow.kernels._AUTO. Uses the private impl
functions directly so one process can compare both paths.

    python3 benchmarks/bench_kernels.py [--batch 64] [--iters 30]
"""

import argparse
import time

import numpy as np

from freqflow import kernels as K


def timeit(fn, iters):
    fn()
    best = float("inf")
    for _ in range(3):
        t0 = time.perf_counter()
        for _ in range(iters):
            fn()
        best = min(best, (time.perf_counter() - t0) / iters)
    return best * 1e3


def row(name, t_numpy, t_numba):
    if t_numba is None:
        print(f"{name:<28} {t_numpy:8.2f} ms {'-':>10}")
        return
    winner = "numba" if t_numba < t_numpy else "numpy"
    print(f"{name:<28} {t_numpy:8.2f} ms {t_numba:8.2f} ms   -> {winner}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--size", type=int, default=16)
    ap.add_argument("--channels", type=int, default=32)
    ap.add_argument("--iters", type=int, default=30)
    args = ap.parse_args()

    if not K.HAVE_NUMBA:
        raise SystemExit("numba unavailable; run without FREQFLOW_BACKEND=numpy")

    b, s, c = args.batch, args.size, args.channels
    g = np.random.default_rng(0)
    x = g.normal(size=(b, s, s, c)).astype(np.float32)
    w = g.normal(size=(3, 3, c, c)).astype(np.float32)
    bias = g.normal(size=c).astype(np.float32)
    gy = g.normal(size=(b, s, s, c)).astype(np.float32)

    print(f"shapes: conv ({b},{s},{s},{c}); rows ({b * s * s},{c}); "
          f"elementwise {b * s * s * 2 * c} elems")
    print(f"{'kernel':<28} {'numpy':>11} {'numba':>11}")

    row("conv3x3 fwd",
        timeit(lambda: K._conv3x3_fwd_numpy(x, w, bias), args.iters),
        timeit(lambda: K._conv3x3_fwd_numba(x, w, bias), args.iters))
    _, cols = K._conv3x3_fwd_numpy(x, w, bias)
    row("conv3x3 bwd (cached cols)",
        timeit(lambda: K._conv3x3_bwd_numpy(cols, x, w, gy), args.iters),
        timeit(lambda: K._conv3x3_bwd_numba(cols, x, w, gy), args.iters))

    rows = np.ascontiguousarray(x.reshape(-1, c))
    grows = np.ascontiguousarray(gy.reshape(-1, c))
    gamma = np.ones(c, np.float32)
    beta = np.zeros(c, np.float32)

    def ln_nb():
        y = np.empty_like(rows)
        mean = np.empty(rows.shape[0], np.float32)
        rstd = np.empty(rows.shape[0], np.float32)
        K._layernorm_fwd_nb(rows, gamma, beta, 1e-5, y, mean, rstd)

    row("layernorm fwd",
        timeit(lambda: K._layernorm_fwd_numpy(rows, gamma, beta, 1e-5), args.iters),
        timeit(ln_nb, args.iters))

    _, mean, rstd = K._layernorm_fwd_numpy(rows, gamma, beta, 1e-5)
    mean32, rstd32 = mean.astype(np.float32), rstd.astype(np.float32)

    def lnb_nb():
        gx = np.empty_like(rows)
        gg = np.zeros_like(gamma)
        gb = np.zeros_like(gamma)
        K._layernorm_bwd_gx_nb(rows, gamma, mean32, rstd32, grows, gx)
        K._layernorm_bwd_params_nb(rows, mean32, rstd32, grows, gg, gb)

    row("layernorm bwd",
        timeit(lambda: K._layernorm_bwd_numpy(rows, gamma, mean, rstd, grows), args.iters),
        timeit(lnb_nb, args.iters))

    e = np.ascontiguousarray(g.normal(size=b * s * s * 2 * c).astype(np.float32))
    ge = np.ascontiguousarray(g.normal(size=e.shape).astype(np.float32))

    def gf_nb():
        y = np.empty_like(e)
        th = np.empty_like(e)
        K._gelu_fwd_nb(e, y, th)

    row("gelu fwd",
        timeit(lambda: K._gelu_fwd_numpy(e), args.iters),
        timeit(gf_nb, args.iters))

    _, th = K._gelu_fwd_numpy(e)

    def gb_nb():
        gx = np.empty_like(e)
        K._gelu_bwd_nb(e, th, ge, gx)

    row("gelu bwd (cached tanh)",
        timeit(lambda: K._gelu_bwd_numpy(e, th, ge), args.iters),
        timeit(gb_nb, args.iters))

    scores = np.ascontiguousarray(g.normal(size=(b * s, s)).astype(np.float32))
    gsc = np.ascontiguousarray(g.normal(size=scores.shape).astype(np.float32))

    def sm_nb():
        y = np.empty_like(scores)
        K._softmax_fwd_nb(scores, y)

    row("softmax fwd",
        timeit(lambda: K._softmax_fwd_numpy(scores), args.iters),
        timeit(sm_nb, args.iters))

    sm = K._softmax_fwd_numpy(scores)

    def smb_nb():
        gx = np.empty_like(sm)
        K._softmax_bwd_nb(sm, gsc, gx)

    row("softmax bwd",
        timeit(lambda: K._softmax_bwd_numpy(sm, gsc), args.iters),
        timeit(smb_nb, args.iters))

    n = 200_000
    p = g.normal(size=n)
    grad = g.normal(size=n)
    m = np.zeros(n)
    v = np.zeros(n)
    row("adamw update (200k params)",
        timeit(lambda: K._adamw_update_numpy(p, grad, m, v, 2e-4, 0.99, 0.99, 1e-8, 0.03, 0.5, 0.5),
               args.iters),
        timeit(lambda: K._adamw_update_nb(p, grad, m, v, 2e-4, 0.99, 0.99, 1e-8, 0.03, 0.5, 0.5),
               args.iters))

    print(f"\nactive FREQFLOW_BACKEND resolution: {K.BACKEND}"
          + (f" (auto table: {K._AUTO})" if K.BACKEND == "auto" else ""))


if __name__ == "__main__":
    main()
