"""Independent reference implementations used as test oracles.

Everything here is deliberately written the slow, obvious way (explicit
summations, scalar loops) and must stay independent of the package code
it is used to check.
"""

import cmath

import numpy as np


def dft2_direct(image):
    """Direct O(N^4) 2D DFT per channel, unshifted (DC at (0, 0)).

    F(u, v) = sum_x sum_y X(x, y) * exp(-2j*pi*(u*x/H + v*y/W))
    """
    image = np.asarray(image, dtype=np.float64)
    c, h, w = image.shape
    out = np.zeros((c, h, w), dtype=np.complex128)
    for ch in range(c):
        for u in range(h):
            for v in range(w):
                acc = 0.0 + 0.0j
                for x in range(h):
                    for y in range(w):
                        acc += image[ch, x, y] * cmath.exp(-2j * cmath.pi * (u * x / h + v * y / w))
                out[ch, u, v] = acc
    return out


def idft2_direct(spectrum_unshifted):
    """Direct inverse: (1/(HW)) * sum_u sum_v F(u,v) * exp(+2j*pi*(ux/H + vy/W))."""
    spec = np.asarray(spectrum_unshifted, dtype=np.complex128)
    c, h, w = spec.shape
    out = np.zeros((c, h, w), dtype=np.complex128)
    for ch in range(c):
        for x in range(h):
            for y in range(w):
                acc = 0.0 + 0.0j
                for u in range(h):
                    for v in range(w):
                        acc += spec[ch, u, v] * cmath.exp(2j * cmath.pi * (u * x / h + v * y / w))
                out[ch, x, y] = acc / (h * w)
    return out


def center_shift(spectrum_unshifted):
    """Reference fftshift: move DC from (0,0) to (H/2, W/2) by rolling."""
    spec = np.asarray(spectrum_unshifted)
    h, w = spec.shape[-2:]
    return np.roll(np.roll(spec, h // 2, axis=-2), w // 2, axis=-1)


def adamw_reference(p0, grad_fn, lr, betas, eps, weight_decay, steps):
    """Scalar AdamW trajectory, straight from the update equations."""
    p = float(p0)
    m = 0.0
    v = 0.0
    history = []
    for t in range(1, steps + 1):
        g = grad_fn(p)
        m = betas[0] * m + (1 - betas[0]) * g
        v = betas[1] * v + (1 - betas[1]) * g * g
        m_hat = m / (1 - betas[0] ** t)
        v_hat = v / (1 - betas[1] ** t)
        p = p - lr * m_hat / (v_hat**0.5 + eps)
        p = p - lr * weight_decay * p
        history.append(p)
    return np.array(history)
