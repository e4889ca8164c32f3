"""Synthetic class-conditional datasets and portable PPM/PGM image I/O.

Each class mixes a low-frequency component (a smooth Gaussian blob whose
position and width are class-coded, with small per-sample jitter) and a
high-frequency component (oriented stripes at a class-coded spatial
frequency proportional to (k mod 4 + 1), random phase). Classes therefore
differ in both bands, so band supervision has signal to exploit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, FormatError, InputError
from .rng import RngStream

BLOB_AMPLITUDE = 0.85
STRIPE_AMPLITUDE = 0.45
STRIPE_BINS_PER_LEVEL = 1.75  # spectral radius of the level-1 stripe, in bins
JITTER_FRAC = 0.04


@dataclass(frozen=True)
class GeneratorSpec:
    num_classes: int
    per_class: int
    size: int
    channels: int
    seed: int


@dataclass
class Dataset:
    images: list
    labels: list
    num_classes: int
    generator_spec: GeneratorSpec

    def __len__(self):
        return len(self.images)


def _class_geometry(k: int, num_classes: int, size: int):
    angle = 2.0 * np.pi * k / num_classes
    cx = size / 2.0 + 0.28 * size * np.cos(angle)
    cy = size / 2.0 + 0.28 * size * np.sin(angle)
    width = size * (0.11 + 0.04 * (k % 3))
    stripe_level = k % 4 + 1
    stripe_theta = np.pi * (k % 8) / 8.0
    return cx, cy, width, stripe_level, stripe_theta


def synth_image(k: int, num_classes: int, size: int, channels: int, stream: RngStream) -> np.ndarray:
    cx, cy, width, level, theta = _class_geometry(k, num_classes, size)
    cx = cx + stream.normal() * JITTER_FRAC * size
    cy = cy + stream.normal() * JITTER_FRAC * size
    ys = np.arange(size)[:, None]
    xs = np.arange(size)[None, :]
    r2 = (xs - cx) ** 2 + (ys - cy) ** 2
    blob = BLOB_AMPLITUDE * np.exp(-r2 / (2.0 * width**2))

    phase = stream.uniform(0.0, 2.0 * np.pi)
    freq = STRIPE_BINS_PER_LEVEL * level
    carrier = 2.0 * np.pi * freq * (xs * np.cos(theta) + ys * np.sin(theta)) / size
    stripes = STRIPE_AMPLITUDE * np.sin(carrier + phase)

    img = np.empty((channels, size, size))
    for c in range(channels):
        tint = 1.0 if channels == 1 else 0.75 + 0.25 * np.cos(2.0 * np.pi * (c / channels + k / num_classes))
        img[c] = tint * blob + stripes
    return np.clip(img, -1.0, 1.0)


def synth_dataset(num_classes: int, per_class: int, size: int, seed: int,
                  channels: int = 1) -> Dataset:
    """Deterministic dataset; image (k, i) depends only on (seed, k, i)."""
    if size % 2 or size < 2:
        raise DimensionError(f"size must be even and >= 2, got {size}")
    if num_classes < 2:
        raise InputError("need at least 2 classes")
    if channels not in (1, 3):
        raise InputError("channels must be 1 or 3")
    root = RngStream(seed)
    images = []
    labels = []
    for k in range(num_classes):
        for i in range(per_class):
            images.append(synth_image(k, num_classes, size, channels, root.child(k, i)))
            labels.append(k)
    spec = GeneratorSpec(num_classes, per_class, size, channels, seed)
    return Dataset(images=images, labels=labels, num_classes=num_classes, generator_spec=spec)


# ----------------------------------------------------------------- PPM / PGM


def _to_bytes(image: np.ndarray) -> np.ndarray:
    # [-1, 1] -> 0..255, round half away from zero (values are nonnegative here)
    scaled = (np.clip(image, -1.0, 1.0) + 1.0) / 2.0 * 255.0
    return np.floor(scaled + 0.5).astype(np.uint8)


def write_ppm(image: np.ndarray, path) -> None:
    """Binary P6 for 3-channel images, P5 for single-channel."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise InputError(f"expected 1- or 3-channel C x H x W image, got shape {arr.shape}")
    c, h, w = arr.shape
    magic = b"P5" if c == 1 else b"P6"
    payload = _to_bytes(arr)
    # interleave channels for P6: H x W x C
    body = payload[0] if c == 1 else np.moveaxis(payload, 0, -1)
    with open(path, "wb") as fh:
        fh.write(magic + b"\n" + f"{w} {h}\n255\n".encode("ascii"))
        fh.write(body.tobytes())


def _read_tokens(blob: bytes, count: int):
    """First `count` whitespace-separated header tokens, skipping # comments;
    returns (tokens, offset just past the single whitespace after the last)."""
    tokens = []
    i = 0
    while len(tokens) < count:
        if i >= len(blob):
            raise FormatError("malformed header: unexpected end of file")
        ch = blob[i : i + 1]
        if ch == b"#":
            while i < len(blob) and blob[i : i + 1] != b"\n":
                i += 1
            i += 1
        elif ch.isspace():
            i += 1
        else:
            start = i
            while i < len(blob) and not blob[i : i + 1].isspace():
                i += 1
            tokens.append(blob[start:i])
            if len(tokens) == count:
                if i >= len(blob):
                    raise FormatError("malformed header: missing payload separator")
                i += 1  # exactly one whitespace byte separates header and payload
    return tokens, i


def read_ppm(path) -> np.ndarray:
    """Read P5/P6 back to a C x H x W image in [-1, 1]."""
    blob = open(path, "rb").read()
    tokens, offset = _read_tokens(blob, 4)
    magic = tokens[0]
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise FormatError(f"malformed header: unknown magic {magic!r}")
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise FormatError(f"malformed header: {exc}") from exc
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval} (must be 255)")
    need = w * h * channels
    payload = blob[offset : offset + need]
    if len(payload) < need:
        raise FormatError(f"short payload: expected {need} bytes, got {len(payload)}")
    flat = np.frombuffer(payload, dtype=np.uint8)
    if channels == 1:
        arr = flat.reshape(h, w)[None, :, :]
    else:
        arr = np.moveaxis(flat.reshape(h, w, 3), -1, 0)
    return arr.astype(np.float64) / 255.0 * 2.0 - 1.0


def load_ppm_dir(directory) -> list:
    """Directory-of-PPM ingestion hook for user-supplied corpora."""
    from pathlib import Path

    paths = sorted(Path(directory).glob("*.p[pg]m"))
    if not paths:
        raise InputError(f"no .ppm/.pgm files under {directory}")
    return [read_ppm(p) for p in paths]
