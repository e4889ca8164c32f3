"""Seeded RNG streams.

All randomness in the package flows through RngStream so that every run is a
pure function of its root seed. Child streams are derived by integer index via
numpy's SeedSequence spawn keys, which is stable across processes and numpy
versions (PCG64 stream compatibility is guaranteed by numpy).
"""

from __future__ import annotations

import numpy as np


class RngStream:
    """A named, exclusively-owned random stream derived from a root seed."""

    def __init__(self, seed: int, spawn_key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.spawn_key = tuple(int(k) for k in spawn_key)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.spawn_key)
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def child(self, *indices: int) -> "RngStream":
        """Derive an independent stream; same (seed, path) -> same stream."""
        return RngStream(self.seed, self.spawn_key + tuple(indices))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def normal(self, size=None):
        return self.gen.standard_normal(size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size=size)

    def random(self, size=None):
        return self.gen.random(size)
