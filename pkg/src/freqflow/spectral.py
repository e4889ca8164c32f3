"""2D Fourier analysis, centered Gaussian band masks, and band decomposition.

Conventions (fixed across the package):
  - images are real C x H x W arrays, H and W even;
  - the forward transform is unnormalized, the inverse carries 1/(HW);
  - spectra are stored centered, DC at index (H/2, W/2) (fftshift layout),
    so the Gaussian masks can be written literally around the center;
  - all spectral math runs in 64-bit floats regardless of network precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InputError, NumericError, ParameterError, SymmetryViolationError

LOG_EPS = 1e-8
IMAG_RESIDUAL_TOL = 1e-4


def _check_image(image: np.ndarray, name: str = "image") -> np.ndarray:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3:
        raise DimensionError(f"{name} must be C x H x W, got shape {arr.shape}")
    _, h, w = arr.shape
    if h < 2 or w < 2 or h % 2 or w % 2:
        raise DimensionError(f"{name} needs even H, W >= 2, got {h} x {w}")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class Spectrum:
    """Complex C x H x W spectrum in centered layout (DC at (H/2, W/2))."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.complex128)
        if arr.ndim != 3:
            raise DimensionError(f"spectrum must be C x H x W, got shape {arr.shape}")
        _, h, w = arr.shape
        if h < 2 or w < 2 or h % 2 or w % 2:
            raise DimensionError(f"spectrum needs even H, W >= 2, got {h} x {w}")
        object.__setattr__(self, "data", arr)

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True)
class FrequencyMaskPair:
    """Low-pass Gaussian mask and its high-pass counterpart, centered layout."""

    low: np.ndarray
    high: np.ndarray
    sigma_low: float
    sigma_high: float


@dataclass(frozen=True)
class BandDecomposition:
    """Spatial-domain band images and the masks that produced them."""

    low: np.ndarray
    high: np.ndarray
    masks: FrequencyMaskPair


def dft2(image: np.ndarray) -> Spectrum:
    """Per-channel 2D DFT (unnormalized forward kernel), shifted to center DC."""
    arr = _check_image(image)
    spec = np.fft.fftshift(np.fft.fft2(arr, axes=(-2, -1)), axes=(-2, -1))
    return Spectrum(spec)


def _idft2_impl(spectrum: Spectrum) -> tuple[np.ndarray, float]:
    unshifted = np.fft.ifftshift(spectrum.data, axes=(-2, -1))
    out = np.fft.ifft2(unshifted, axes=(-2, -1))
    residual = float(np.max(np.abs(out.imag))) if out.size else 0.0
    return out.real, residual


def idft2(spectrum: Spectrum) -> np.ndarray:
    """Inverse of dft2; returns the real part.

    The imaginary residual of the inverse is a cheap corruption detector: a
    centered real-symmetric mask preserves conjugate symmetry, so anything
    above IMAG_RESIDUAL_TOL means the spectrum was not built from a real
    image and a symmetric mask.
    """
    if not isinstance(spectrum, Spectrum):
        spectrum = Spectrum(np.asarray(spectrum))
    out, residual = _idft2_impl(spectrum)
    if residual > IMAG_RESIDUAL_TOL:
        raise SymmetryViolationError(
            f"imaginary residual {residual:.3e} exceeds {IMAG_RESIDUAL_TOL:.0e}; "
            "spectrum is not conjugate-symmetric"
        )
    return out


def make_masks(h: int, w: int, sigma_low: float, sigma_high: float) -> FrequencyMaskPair:
    """Centered Gaussian low-pass mask exp(-r^2 / 2*sigma^2) and 1 - Gaussian high-pass."""
    if h < 2 or w < 2 or h % 2 or w % 2:
        raise DimensionError(f"mask dims must be even and >= 2, got {h} x {w}")
    if sigma_low <= 0 or sigma_high <= 0:
        raise ParameterError(f"sigmas must be positive, got {sigma_low}, {sigma_high}")
    u = np.arange(h, dtype=np.float64)[:, None] - h / 2.0
    v = np.arange(w, dtype=np.float64)[None, :] - w / 2.0
    r2 = u * u + v * v
    low = np.exp(-r2 / (2.0 * float(sigma_low) ** 2))
    high = 1.0 - np.exp(-r2 / (2.0 * float(sigma_high) ** 2))
    return FrequencyMaskPair(low=low, high=high, sigma_low=float(sigma_low), sigma_high=float(sigma_high))


def _check_mask(image: np.ndarray, mask: np.ndarray, name: str = "mask") -> np.ndarray:
    m = np.asarray(mask, dtype=np.float64)
    if m.shape != image.shape[-2:]:
        raise DimensionError(f"{name} shape {m.shape} does not match image H x W {image.shape[-2:]}")
    return m


def decompose(image: np.ndarray, masks: FrequencyMaskPair) -> BandDecomposition:
    """Split an image into low/high band images: X_b = IDFT(mask_b * DFT(X))."""
    arr = _check_image(image)
    low_mask = _check_mask(arr, masks.low, "low mask")
    high_mask = _check_mask(arr, masks.high, "high mask")
    spec = dft2(arr).data
    low, res_l = _idft2_impl(Spectrum(spec * low_mask[None, :, :]))
    high, res_h = _idft2_impl(Spectrum(spec * high_mask[None, :, :]))
    residual = max(res_l, res_h)
    if residual > IMAG_RESIDUAL_TOL:
        raise SymmetryViolationError(
            f"band decomposition imaginary residual {residual:.3e} exceeds {IMAG_RESIDUAL_TOL:.0e}"
        )
    return BandDecomposition(low=low, high=high, masks=masks)


def decompose_batch(images: np.ndarray, masks: FrequencyMaskPair) -> tuple[np.ndarray, np.ndarray]:
    """Batched decompose over (B, C, H, W); one FFT call instead of B."""
    arr = np.asarray(images, dtype=np.float64)
    if arr.ndim != 4:
        raise DimensionError(f"expected B x C x H x W, got shape {arr.shape}")
    if masks.low.shape != arr.shape[-2:]:
        raise DimensionError(f"mask shape {masks.low.shape} does not match images {arr.shape[-2:]}")
    spec = np.fft.fftshift(np.fft.fft2(arr, axes=(-2, -1)), axes=(-2, -1))
    low = np.fft.ifft2(np.fft.ifftshift(spec * masks.low, axes=(-2, -1)), axes=(-2, -1))
    high = np.fft.ifft2(np.fft.ifftshift(spec * masks.high, axes=(-2, -1)), axes=(-2, -1))
    residual = max(float(np.max(np.abs(low.imag))), float(np.max(np.abs(high.imag))))
    if residual > IMAG_RESIDUAL_TOL:
        raise SymmetryViolationError(
            f"band decomposition imaginary residual {residual:.3e} exceeds {IMAG_RESIDUAL_TOL:.0e}"
        )
    return low.real, high.real


def _mean_magnitude(images, name: str) -> np.ndarray:
    """Mean |DFT| over samples and channels, centered layout, per bin."""
    images = list(images)
    if not images:
        raise InputError(f"{name} is empty")
    first = _check_image(images[0], name)
    acc = np.zeros(first.shape[-2:], dtype=np.float64)
    count = 0
    for img in images:
        arr = _check_image(img, name)
        if arr.shape[-2:] != first.shape[-2:]:
            raise DimensionError(f"{name} images disagree on H x W")
        acc += np.abs(dft2(arr).data).sum(axis=0)
        count += arr.shape[0]
    return acc / count


def frequency_error(real_images, gen_images, band_mask: np.ndarray) -> float:
    """Signed in-band gap between mean spectral magnitudes, normalized.

    Returns mask-weighted-mean(E|F_real| - E|F_gen|) / mask-weighted-mean(E|F_real|),
    so 0 means the generated band matches the real one and 1 means the
    generated band is empty. Dimensionless and dataset-scale-free.
    """
    e_real = _mean_magnitude(real_images, "real_images")
    e_gen = _mean_magnitude(gen_images, "gen_images")
    if e_real.shape != e_gen.shape:
        raise DimensionError("real and generated images disagree on H x W")
    mask = np.asarray(band_mask, dtype=np.float64)
    if mask.shape != e_real.shape:
        raise DimensionError(f"band mask shape {mask.shape} does not match spectra {e_real.shape}")
    denom = float((mask * e_real).sum())
    if denom == 0.0:
        raise NumericError("band-weighted real magnitude is zero; error undefined")
    return float((mask * (e_real - e_gen)).sum() / denom)


def band_log_amplitude(image: np.ndarray, band_mask: np.ndarray) -> float:
    """log(eps + mask-weighted mean of |DFT(image)|) over all channels and bins."""
    arr = _check_image(image)
    mask = _check_mask(arr, band_mask, "band mask")
    mag = np.abs(dft2(arr).data)
    total = float(mask.sum()) * arr.shape[0]
    if total == 0.0:
        raise NumericError("band mask sums to zero")
    weighted = float((mag * mask[None, :, :]).sum() / total)
    return float(np.log(LOG_EPS + weighted))
