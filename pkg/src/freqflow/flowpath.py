"""Linear corruption path, velocity targets, and band-split supervision.

The path is X_t = (1 - t) X + t N with N standard normal, so the target
velocity dX_t/dt is N - X. Band targets are the Gaussian-filtered velocity;
by linearity of the filters this equals N_band - X_band.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError
from .rng import RngStream
from .spectral import FrequencyMaskPair, decompose


@dataclass(frozen=True)
class ClassCondition:
    """Class label, or the distinguished NULL condition (label is None)."""

    label: int | None = None

    @classmethod
    def null(cls) -> "ClassCondition":
        return cls(None)

    @property
    def is_null(self) -> bool:
        return self.label is None

    def index(self, num_classes: int) -> int:
        """Embedding-table row: real labels first, NULL uses the extra row."""
        if self.label is None:
            return num_classes
        if not 0 <= self.label < num_classes:
            raise ParameterError(f"label {self.label} outside [0, {num_classes})")
        return int(self.label)


@dataclass(frozen=True)
class FlowSample:
    """One training example with all supervision targets."""

    x: np.ndarray
    n: np.ndarray
    t: float
    x_t: np.ndarray
    v: np.ndarray
    v_low: np.ndarray
    v_high: np.ndarray
    x_t_low: np.ndarray
    x_t_high: np.ndarray
    label: ClassCondition


def _check_pair(x, n):
    x = np.asarray(x, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    if x.shape != n.shape:
        raise DimensionError(f"shape mismatch {x.shape} vs {n.shape}")
    return x, n


def interpolate(x: np.ndarray, n: np.ndarray, t: float) -> np.ndarray:
    """X_t = (1 - t) x + t n."""
    x, n = _check_pair(x, n)
    if not 0.0 <= t <= 1.0:
        raise ParameterError(f"t must be in [0, 1], got {t}")
    return (1.0 - t) * x + t * n


def velocity_target(x: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Ideal velocity n - x."""
    x, n = _check_pair(x, n)
    return n - x


def band_velocity_targets(v: np.ndarray, masks: FrequencyMaskPair):
    """Low/high-band supervision targets: the filtered velocity."""
    dec = decompose(v, masks)
    return dec.low, dec.high


def draw_batch(
    images: np.ndarray,
    labels,
    rng: RngStream,
    masks: FrequencyMaskPair,
) -> list[FlowSample]:
    """Draw one FlowSample per image with batched band decompositions.

    Consumes the stream in bulk (t vector, then the noise block), so a batch
    is not stream-compatible with B sequential draw_sample calls; it is the
    training hot path and deterministic in its own right.
    """
    from .spectral import decompose_batch

    x = np.asarray(images, dtype=np.float64)
    if x.ndim != 4:
        raise DimensionError(f"expected B x C x H x W, got {x.shape}")
    b = x.shape[0]
    t = rng.uniform(size=b)
    n = rng.normal(size=x.shape)
    x_t = (1.0 - t)[:, None, None, None] * x + t[:, None, None, None] * n
    v = n - x
    v_low, v_high = decompose_batch(v, masks)
    xt_low, xt_high = decompose_batch(x_t, masks)
    return [
        FlowSample(
            x=x[i], n=n[i], t=float(t[i]), x_t=x_t[i], v=v[i],
            v_low=v_low[i], v_high=v_high[i],
            x_t_low=xt_low[i], x_t_high=xt_high[i],
            label=labels[i] if isinstance(labels[i], ClassCondition) else ClassCondition(int(labels[i])),
        )
        for i in range(b)
    ]


def draw_sample(
    x: np.ndarray,
    label: ClassCondition,
    rng: RngStream,
    masks: FrequencyMaskPair,
) -> FlowSample:
    """Draw t ~ U[0,1] and N ~ N(0, I), then populate all targets."""
    x = np.asarray(x, dtype=np.float64)
    t = float(rng.uniform())
    n = rng.normal(size=x.shape)
    x_t = interpolate(x, n, t)
    v = velocity_target(x, n)
    v_low, v_high = band_velocity_targets(v, masks)
    x_dec = decompose(x_t, masks)
    return FlowSample(
        x=x,
        n=n,
        t=t,
        x_t=x_t,
        v=v,
        v_low=v_low,
        v_high=v_high,
        x_t_low=x_dec.low,
        x_t_high=x_dec.high,
        label=label,
    )
