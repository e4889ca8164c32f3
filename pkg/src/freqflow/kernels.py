"""Hot numeric kernels with two interchangeable backends.

The per-step inner loops (3x3 convolution, layer norm, GELU, softmax, the
AdamW update) exist twice: as numba @njit kernels and as pure-numpy
implementations. FREQFLOW_BACKEND selects the path:

    FREQFLOW_BACKEND=numba   numba kernels everywhere (error without numba)
    FREQFLOW_BACKEND=numpy   the pure-numpy fallback everywhere
    FREQFLOW_BACKEND=auto    per-kernel winners (default; see _AUTO below)

At desk scale the winners are split: reduction-light elementwise chains
(layer norm, softmax, AdamW) go to numba, which fuses their many numpy
passes into one; convolution and GELU stay numpy, where BLAS GEMMs and
vectorized tanh beat scalar loops. benchmarks/bench_kernels.py reproduces
the measurement. Both backends are deterministic run-to-run; they are not
bit-identical to each other because reduction orders differ.

Forward conv and GELU return an opaque context that the matching backward
consumes (cached im2col matrix / cached tanh), so autodiff never recomputes
them.
"""

from __future__ import annotations

import os

import numpy as np

_env = os.environ.get("FREQFLOW_BACKEND", "auto").lower()
if _env not in ("auto", "numba", "numpy"):
    raise ValueError(f"FREQFLOW_BACKEND must be auto|numba|numpy, got {_env!r}")

HAVE_NUMBA = False
if _env in ("auto", "numba"):
    try:
        from numba import config as _numba_config
        from numba import njit

        _numba_config.THREADING_LAYER = "omp"  # skip the TBB version probe
        HAVE_NUMBA = True
    except ImportError:
        if _env == "numba":
            raise

BACKEND = _env if _env != "auto" or HAVE_NUMBA else "numpy"

# per-kernel choices for auto mode (measured, see module docstring); gelu
# splits because the forward is tanh-bound (numpy SIMD wins) while the
# backward reuses the cached tanh (numba fusion wins)
_AUTO = {"conv": "numpy", "layernorm": "numba", "gelu_fwd": "numpy",
         "gelu_bwd": "numba", "softmax": "numba", "adamw": "numba"}

# The training loop churns through large short-lived buffers (im2col blocks,
# gradients); glibc hands each back to the kernel by default, so every step
# pays mmap + page-zeroing again. Raising the mmap threshold lets the
# allocator recycle them. Best effort: silently skipped off glibc.
try:
    import ctypes

    _libc = ctypes.CDLL("libc.so.6", use_errno=True)
    _libc.mallopt(-3, 1 << 26)  # M_MMAP_THRESHOLD = 64 MB
except (OSError, AttributeError):
    pass

# At desk scale every GEMM is small enough that BLAS thread sync costs more
# than it saves (measured ~35% per training step), so pin BLAS to one thread.
try:
    import threadpoolctl

    threadpoolctl.threadpool_limits(limits=1, user_api="blas")
except Exception:  # pragma: no cover - best effort
    pass


def _use_numba(kernel: str) -> bool:
    if BACKEND == "numba":
        return True
    if BACKEND == "numpy" or not HAVE_NUMBA:
        return False
    return _AUTO[kernel] == "numba"


GELU_C = float(np.sqrt(2.0 / np.pi))
GELU_A = 0.044715


# ------------------------------------------------------------------ numpy path


def _im2col(x):
    b, h, w, ci = x.shape
    xp = np.zeros((b, h + 2, w + 2, ci), dtype=x.dtype)
    xp[:, 1:-1, 1:-1] = x
    cols = np.empty((b, h, w, 9, ci), dtype=x.dtype)
    k = 0
    for ky in range(3):
        for kx in range(3):
            cols[:, :, :, k, :] = xp[:, ky : ky + h, kx : kx + w, :]
            k += 1
    return cols.reshape(b * h * w, 9 * ci)


def _conv3x3_fwd_numpy(x, w, bias):
    b, h, wd, ci = x.shape
    co = w.shape[3]
    cols = _im2col(x)
    y = cols @ w.reshape(9 * ci, co)
    y += bias
    return y.reshape(b, h, wd, co), cols


def _conv3x3_bwd_numpy(cols, x, w, gy):
    b, h, wd, ci = x.shape
    co = w.shape[3]
    if cols is None:
        cols = _im2col(x)
    gyf = np.ascontiguousarray(gy.reshape(-1, co))
    gw = (cols.T @ gyf).reshape(3, 3, ci, co)
    gb = gyf.sum(axis=0)
    gcols = (gyf @ w.reshape(9 * ci, co).T).reshape(b, h, wd, 9, ci)
    gxp = np.zeros((b, h + 2, wd + 2, ci), dtype=x.dtype)
    k = 0
    for ky in range(3):
        for kx in range(3):
            gxp[:, ky : ky + h, kx : kx + wd, :] += gcols[:, :, :, k, :]
            k += 1
    return gxp[:, 1:-1, 1:-1, :], gw, gb


def _layernorm_fwd_numpy(x, gamma, beta, eps):
    mean = x.mean(axis=1)
    var = x.var(axis=1)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[:, None]) * rstd[:, None]
    return xhat * gamma + beta, mean, rstd


def _layernorm_bwd_numpy(x, gamma, mean, rstd, gy):
    xhat = (x - mean[:, None]) * rstd[:, None]
    ggamma = (gy * xhat).sum(axis=0)
    gbeta = gy.sum(axis=0)
    gxhat = gy * gamma
    m1 = gxhat.mean(axis=1, keepdims=True)
    m2 = (gxhat * xhat).mean(axis=1, keepdims=True)
    gx = rstd[:, None] * (gxhat - m1 - xhat * m2)
    return gx.astype(x.dtype, copy=False), ggamma, gbeta


def _gelu_fwd_numpy(x):
    th = np.tanh(GELU_C * (x + GELU_A * x * x * x))
    return 0.5 * x * (1.0 + th), th


def _gelu_bwd_numpy(x, th, gy):
    du = GELU_C * (1.0 + 3.0 * GELU_A * x * x)
    return gy * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du)


def _softmax_fwd_numpy(x):
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _softmax_bwd_numpy(y, gy):
    dot = (y * gy).sum(axis=1, keepdims=True)
    return y * (gy - dot)


def _adamw_update_numpy(p, g, m, v, lr, beta1, beta2, eps, wd, bc1, bc2):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    step = (m / bc1) / (np.sqrt(v / bc2) + eps)
    p -= lr * step
    if wd != 0.0:
        p -= lr * wd * p


# ------------------------------------------------------------------ numba path

if HAVE_NUMBA:
    # The conv's arithmetic is BLAS's job either way; what numba buys here is
    # the patch gather/scatter (im2col / col2im) in one fused pass instead of
    # nine strided numpy copies.

    @njit(cache=True)
    def _im2col_nb(xp, cols, h, w):
        b, _, _, ci = xp.shape
        row = 0
        for bi in range(b):
            for oy in range(h):
                for ox in range(w):
                    k = 0
                    for ky in range(3):
                        for kx in range(3):
                            base = k * ci
                            for c in range(ci):
                                cols[row, base + c] = xp[bi, oy + ky, ox + kx, c]
                            k += 1
                    row += 1

    @njit(cache=True)
    def _col2im_nb(gcols, gxp, h, w):
        b, _, _, ci = gxp.shape
        row = 0
        for bi in range(b):
            for oy in range(h):
                for ox in range(w):
                    k = 0
                    for ky in range(3):
                        for kx in range(3):
                            base = k * ci
                            for c in range(ci):
                                gxp[bi, oy + ky, ox + kx, c] += gcols[row, base + c]
                            k += 1
                    row += 1

    def _conv3x3_fwd_numba(x, w, bias):
        b, h, wd, ci = x.shape
        co = w.shape[3]
        xp = np.zeros((b, h + 2, wd + 2, ci), dtype=x.dtype)
        xp[:, 1:-1, 1:-1] = x
        cols = np.empty((b * h * wd, 9 * ci), dtype=x.dtype)
        _im2col_nb(xp, cols, h, wd)
        y = cols @ w.reshape(9 * ci, co)
        y += bias
        return y.reshape(b, h, wd, co), cols

    def _conv3x3_bwd_numba(cols, x, w, gy):
        b, h, wd, ci = x.shape
        co = w.shape[3]
        if cols is None:
            _, cols = _conv3x3_fwd_numba(x, w, np.zeros(co, dtype=x.dtype))
        gyf = np.ascontiguousarray(gy.reshape(-1, co))
        gw = (cols.T @ gyf).reshape(3, 3, ci, co)
        gb = gyf.sum(axis=0)
        gcols = gyf @ w.reshape(9 * ci, co).T
        gxp = np.zeros((b, h + 2, wd + 2, ci), dtype=x.dtype)
        _col2im_nb(gcols, gxp, h, wd)
        return gxp[:, 1:-1, 1:-1, :], gw, gb

    @njit(cache=True)
    def _layernorm_fwd_nb(x, gamma, beta, eps, y, mean, rstd):
        rows, cols = x.shape
        for r in range(rows):
            s = 0.0
            for c in range(cols):
                s += x[r, c]
            mu = s / cols
            q = 0.0
            for c in range(cols):
                d = x[r, c] - mu
                q += d * d
            rs = 1.0 / np.sqrt(q / cols + eps)
            mean[r] = mu
            rstd[r] = rs
            for c in range(cols):
                y[r, c] = (x[r, c] - mu) * rs * gamma[c] + beta[c]

    @njit(cache=True)
    def _layernorm_bwd_gx_nb(x, gamma, mean, rstd, gy, gx):
        rows, cols = x.shape
        for r in range(rows):
            mu = mean[r]
            rs = rstd[r]
            m1 = 0.0
            m2 = 0.0
            for c in range(cols):
                xh = (x[r, c] - mu) * rs
                gxh = gy[r, c] * gamma[c]
                m1 += gxh
                m2 += gxh * xh
            m1 /= cols
            m2 /= cols
            for c in range(cols):
                xh = (x[r, c] - mu) * rs
                gxh = gy[r, c] * gamma[c]
                gx[r, c] = rs * (gxh - m1 - xh * m2)

    @njit(cache=True)
    def _layernorm_bwd_params_nb(x, mean, rstd, gy, ggamma, gbeta):
        rows, cols = x.shape
        for r in range(rows):
            mu = mean[r]
            rs = rstd[r]
            for c in range(cols):
                xh = (x[r, c] - mu) * rs
                ggamma[c] += gy[r, c] * xh
                gbeta[c] += gy[r, c]

    @njit(cache=True)
    def _gelu_fwd_nb(x, y, th):
        n = x.shape[0]
        for i in range(n):
            xi = x[i]
            t = np.tanh(GELU_C * (xi + GELU_A * xi * xi * xi))
            th[i] = t
            y[i] = 0.5 * xi * (1.0 + t)

    @njit(cache=True)
    def _gelu_bwd_nb(x, th, gy, gx):
        n = x.shape[0]
        for i in range(n):
            xi = x[i]
            t = th[i]
            du = GELU_C * (1.0 + 3.0 * GELU_A * xi * xi)
            gx[i] = gy[i] * (0.5 * (1.0 + t) + 0.5 * xi * (1.0 - t * t) * du)

    @njit(cache=True)
    def _softmax_fwd_nb(x, y):
        rows, cols = x.shape
        for r in range(rows):
            mx = x[r, 0]
            for c in range(1, cols):
                if x[r, c] > mx:
                    mx = x[r, c]
            s = 0.0
            for c in range(cols):
                e = np.exp(x[r, c] - mx)
                y[r, c] = e
                s += e
            for c in range(cols):
                y[r, c] /= s

    @njit(cache=True)
    def _softmax_bwd_nb(y, gy, gx):
        rows, cols = y.shape
        for r in range(rows):
            dot = 0.0
            for c in range(cols):
                dot += y[r, c] * gy[r, c]
            for c in range(cols):
                gx[r, c] = y[r, c] * (gy[r, c] - dot)

    @njit(cache=True)
    def _adamw_update_nb(p, g, m, v, lr, beta1, beta2, eps, wd, bc1, bc2):
        n = p.shape[0]
        for i in range(n):
            gi = g[i]
            mi = beta1 * m[i] + (1.0 - beta1) * gi
            vi = beta2 * v[i] + (1.0 - beta2) * gi * gi
            m[i] = mi
            v[i] = vi
            pi = p[i] - lr * ((mi / bc1) / (np.sqrt(vi / bc2) + eps))
            if wd != 0.0:
                pi -= lr * wd * pi
            p[i] = pi


# ------------------------------------------------------------------- dispatch


def conv3x3_fwd(x, w, bias):
    """3x3 convolution, stride 1, zero padding. x: (B,H,W,Ci), w: (3,3,Ci,Co).

    Returns (y, ctx); pass ctx to conv3x3_bwd to reuse forward work.
    """
    if _use_numba("conv"):
        return _conv3x3_fwd_numba(x, w, bias)
    return _conv3x3_fwd_numpy(x, w, bias)


def conv3x3_bwd(ctx, x, w, gy):
    """Gradients of conv3x3_fwd: returns (gx, gw, gb)."""
    if _use_numba("conv"):
        return _conv3x3_bwd_numba(ctx, x, w, gy)
    return _conv3x3_bwd_numpy(ctx, x, w, gy)


def layernorm_fwd(x, gamma, beta, eps=1e-5):
    """Row-wise layer norm over the last axis of a 2D array."""
    if _use_numba("layernorm"):
        y = np.empty_like(x)
        mean = np.empty(x.shape[0], dtype=x.dtype)
        rstd = np.empty(x.shape[0], dtype=x.dtype)
        _layernorm_fwd_nb(x, gamma, beta, eps, y, mean, rstd)
        return y, mean, rstd
    return _layernorm_fwd_numpy(x, gamma, beta, eps)


def layernorm_bwd(x, gamma, mean, rstd, gy):
    if _use_numba("layernorm"):
        gx = np.empty_like(x)
        ggamma = np.zeros_like(gamma)
        gbeta = np.zeros_like(gamma)
        _layernorm_bwd_gx_nb(x, gamma, mean, rstd, gy, gx)
        _layernorm_bwd_params_nb(x, mean, rstd, gy, ggamma, gbeta)
        return gx, ggamma, gbeta
    return _layernorm_bwd_numpy(x, gamma, mean, rstd, gy)


def gelu_fwd(x):
    """Tanh-form GELU. Returns (y, ctx); ctx carries the cached tanh."""
    if _use_numba("gelu_fwd"):
        flat = np.ascontiguousarray(x).reshape(-1)
        y = np.empty_like(flat)
        th = np.empty_like(flat)
        _gelu_fwd_nb(flat, y, th)
        return y.reshape(x.shape), th
    return _gelu_fwd_numpy(x)


def gelu_bwd(x, ctx, gy):
    if _use_numba("gelu_bwd"):
        xf = np.ascontiguousarray(x).reshape(-1)
        gyf = np.ascontiguousarray(gy).reshape(-1)
        gx = np.empty_like(xf)
        _gelu_bwd_nb(xf, np.ascontiguousarray(ctx).reshape(-1), gyf, gx)
        return gx.reshape(x.shape)
    return _gelu_bwd_numpy(x, ctx, gy)


def softmax_fwd(x):
    """Row-wise softmax of a 2D array."""
    if _use_numba("softmax"):
        y = np.empty_like(x)
        _softmax_fwd_nb(x, y)
        return y
    return _softmax_fwd_numpy(x)


def softmax_bwd(y, gy):
    if _use_numba("softmax"):
        gx = np.empty_like(y)
        _softmax_bwd_nb(y, gy, gx)
        return gx
    return _softmax_bwd_numpy(y, gy)


def adamw_update(p, g, m, v, lr, beta1, beta2, eps, wd, step):
    """In-place decoupled-weight-decay Adam step on flat arrays; step is 1-based."""
    bc1 = 1.0 - beta1**step
    bc2 = 1.0 - beta2**step
    if _use_numba("adamw"):
        _adamw_update_nb(p, g, m, v, lr, beta1, beta2, eps, wd, bc1, bc2)
    else:
        _adamw_update_numpy(p, g, m, v, lr, beta1, beta2, eps, wd, bc1, bc2)
