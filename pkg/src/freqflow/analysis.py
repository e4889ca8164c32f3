"""Spectral diagnostics over sampling trajectories.

Curves use the 1000-step display axis (step = round(1000*t)). The relative
log-amplitude is affinely normalized so pure noise (t=1) maps to 1 and the
clean-data mean maps to 0; the band definitions reuse the training masks.
"""

from __future__ import annotations

import numpy as np

from .errors import AnalysisError, InputError
from .flowpath import ClassCondition
from .sampling import SamplerConfig, Trajectory, sample_batch
from .spectral import FrequencyMaskPair, band_log_amplitude, frequency_error

DEGENERATE_TOL = 1e-12


def relative_log_amplitude_curve(trajectory: Trajectory, band_mask: np.ndarray,
                                 reference_clean) -> list[tuple[int, float]]:
    """R(t) = (A(t) - A_clean) / (A(1) - A_clean) for each captured state."""
    if len(trajectory) == 0:
        raise InputError("trajectory has no captured states")
    reference_clean = list(reference_clean)
    if not reference_clean:
        raise InputError("reference set is empty")
    a_clean = float(np.mean([band_log_amplitude(img, band_mask) for img in reference_clean]))
    amps = [(p, band_log_amplitude(p.x_t, band_mask)) for p in trajectory]
    a_noise = amps[0][1]
    denom = a_noise - a_clean
    if abs(denom) < DEGENERATE_TOL:
        raise AnalysisError(
            f"degenerate normalization: |A(1) - A_clean| = {abs(denom):.3e} < {DEGENERATE_TOL:.0e}"
        )
    return [(p.step1000, (amp - a_clean) / denom) for p, amp in amps]


def omega_curve(trajectory: Trajectory) -> list[tuple[int, float, float]]:
    """Gate means per captured state: (step1000, omega_low, omega_high)."""
    return [(p.step1000, p.mean_omega, 1.0 - p.mean_omega) for p in trajectory]


def frequency_error_report(real_images, params, num_samples: int,
                           sampler_cfg: SamplerConfig, masks: FrequencyMaskPair,
                           gen_images=None) -> dict[str, float]:
    """Low/high in-band frequency error of generated vs real samples.

    gen_images bypasses the sampler (test hook and ablation tooling);
    otherwise num_samples images are drawn with labels cycling the classes.
    """
    if gen_images is None:
        if num_samples < 1:
            raise InputError("num_samples must be >= 1")
        num_classes = params.config.num_classes
        labels = [ClassCondition(i % num_classes) for i in range(num_samples)]
        images, _ = sample_batch(params, labels, sampler_cfg, masks)
        gen_images = list(images)
    return {
        "low": frequency_error(real_images, gen_images, masks.low),
        "high": frequency_error(real_images, gen_images, masks.high),
    }


# ------------------------------------------------------------------ CSV I/O


def write_fig2_csv(points, path):
    with open(path, "w", newline="\n") as fh:
        fh.write("step1000,relative_log_amplitude\n")
        for step, value in points:
            fh.write(f"{step},{value:.10g}\n")


def write_fig4_csv(points, path):
    with open(path, "w", newline="\n") as fh:
        fh.write("step1000,omega_low,omega_high\n")
        for step, lo, hi in points:
            fh.write(f"{step},{lo:.10g},{hi:.10g}\n")


def write_freq_error_csv(report: dict, path):
    with open(path, "w", newline="\n") as fh:
        fh.write("band,error\n")
        fh.write(f"low,{report['low']:.10g}\n")
        fh.write(f"high,{report['high']:.10g}\n")
