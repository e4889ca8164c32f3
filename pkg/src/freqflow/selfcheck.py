"""Built-in oracle suite behind `freqflow check`.

Each check recomputes an independent reference (direct summations, closed
forms, finite differences) and compares the production path against it.
inject_fault="dft-sign" flips the transform's kernel sign before the
comparison, to prove the dft oracle actually bites.
"""

from __future__ import annotations

import cmath
import time

import numpy as np

from . import autodiff as ad
from . import spectral, training
from .model import ModelConfig, ModelParams, forward_core, init_params, param_schema
from .rng import RngStream
from .sampling import SamplerConfig, sample
from .flowpath import ClassCondition, draw_batch

CHECK_CFG = ModelConfig(image_size=8, patch_size=4, freq_depth=2, freq_width=16,
                        spatial_depth=2, spatial_width=8, time_embed_dim=8, num_classes=4)


def _dft_direct(image: np.ndarray) -> np.ndarray:
    c, h, w = image.shape
    out = np.zeros((c, h, w), dtype=np.complex128)
    for ch in range(c):
        for u in range(h):
            for v in range(w):
                acc = 0j
                for x in range(h):
                    for y in range(w):
                        acc += image[ch, x, y] * cmath.exp(-2j * cmath.pi * (u * x / h + v * y / w))
                out[ch, u, v] = acc
    return out


def check_dft_oracle(inject_fault=None):
    g = np.random.default_rng(0)
    worst = 0.0
    for _ in range(12):
        h = int(g.choice([2, 4, 6, 8]))
        img = g.normal(size=(1, h, h))
        ours = spectral.dft2(img).data
        if inject_fault == "dft-sign":
            ours = np.conj(ours)
        ref = _dft_direct(img)
        ref = np.roll(np.roll(ref, h // 2, axis=-2), h // 2, axis=-1)
        worst = max(worst, float(np.max(np.abs(ours - ref))))
    return worst < 1e-6, f"max |dft2 - direct sum| = {worst:.2e}"


def check_dft_roundtrip(inject_fault=None):
    g = np.random.default_rng(1)
    worst = 0.0
    for _ in range(8):
        img = g.normal(size=(3, 8, 8))
        back = spectral.idft2(spectral.dft2(img))
        worst = max(worst, float(np.max(np.abs(back - img))))
    return worst < 1e-9, f"max roundtrip error = {worst:.2e}"


def check_parseval(inject_fault=None):
    g = np.random.default_rng(2)
    worst = 0.0
    for _ in range(8):
        img = g.normal(size=(1, 16, 16))
        spec = spectral.dft2(img).data
        lhs = float(np.sum(np.abs(spec) ** 2))
        rhs = 256.0 * float(np.sum(img**2))
        worst = max(worst, abs(lhs - rhs) / rhs)
    return worst < 1e-10, f"max relative Parseval error = {worst:.2e}"


def check_mask_complement(inject_fault=None):
    worst = 0.0
    for sigma in (0.7, 2.0, 8.0):
        m = spectral.make_masks(16, 16, sigma, sigma)
        worst = max(worst, float(np.max(np.abs(m.low + m.high - 1.0))))
    m = spectral.make_masks(16, 16, 8.0, 2.0)
    centered = m.low[8, 8] == 1.0 and m.high[8, 8] == 0.0
    return worst < 1e-12 and centered, f"max |low + high - 1| = {worst:.2e}"


def check_gradients(inject_fault=None, probes=25):
    params = init_params(CHECK_CFG, RngStream(3), zero_heads=False)
    masks = spectral.make_masks(8, 8, 8.0, 2.0)
    g = np.random.default_rng(4)
    images = np.clip(g.normal(size=(2, 1, 8, 8)) * 0.4, -1, 1)
    batch = draw_batch(images, [0, 1], RngStream(5), masks)
    cfg = training.TrainConfig(label_dropout=0.0, batch_size=2)
    x_t = np.stack([s.x_t for s in batch])
    t = np.array([s.t for s in batch])
    idx = np.array([s.label.index(CHECK_CFG.num_classes) for s in batch])
    targets = {"v": np.stack([s.v for s in batch]),
               "v_low": np.stack([s.v_low for s in batch]),
               "v_high": np.stack([s.v_high for s in batch])}

    def loss_fn(tensors):
        v_hat, freq = forward_core(x_t, t, idx, tensors, CHECK_CFG, masks)
        loss, _ = training._loss_tape(v_hat, freq, targets, cfg)
        return loss

    report = training.gradient_check(params, loss_fn, probes=probes, seed=6)
    return report.passed, f"max relative gradient error = {report.max_rel_error:.2e}"


def check_sampler_exact(inject_fault=None):
    tensors = {k: np.zeros(s, dtype=np.float32) for k, s in param_schema(CHECK_CFG).items()}
    tensors["spatial.head.b"][:] = 0.5
    params = ModelParams(CHECK_CFG, tensors)
    masks = spectral.make_masks(8, 8, 8.0, 2.0)
    ok = True
    for steps in (1, 7):
        img, _ = sample(params, ClassCondition(0), SamplerConfig(steps=steps, seed=7), masks)
        noise = RngStream(7).child(0).normal(size=(1, 8, 8))
        ok = ok and np.array_equal(img, noise - np.float64(np.float32(0.5)))
    return ok, "constant-field Euler bit-exact at steps 1 and 7"


CHECKS = [
    ("dft_oracle", check_dft_oracle),
    ("dft_roundtrip", check_dft_roundtrip),
    ("parseval", check_parseval),
    ("mask_complement", check_mask_complement),
    ("gradient_check", check_gradients),
    ("sampler_exact", check_sampler_exact),
]


def run_all(inject_fault=None):
    results = []
    for name, fn in CHECKS:
        start = time.perf_counter()
        try:
            passed, detail = fn(inject_fault=inject_fault)
        except Exception as exc:  # a crashed check is a failed check
            passed, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append((name, passed, detail, time.perf_counter() - start))
    return results
