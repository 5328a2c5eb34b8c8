"""Seeded randomness.

Every stochastic choice in the toolkit (parameter init, shuffling, synthetic
audio) flows through :class:`RngState` so a run is fully determined by its
seed. The bit generator is numpy's PCG64; an identical seed followed by an
identical draw sequence yields bitwise-identical values on every platform.
"""
from __future__ import annotations

import numpy as np


class RngState:
    """A seed plus the internal counter state of a PCG64 generator."""

    def __init__(self, seed: int):
        seed = int(seed)
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.seed = seed
        self._gen = np.random.Generator(np.random.PCG64(seed))

    def uniform(self, low: float, high: float, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def integers(self, low: int, high: int, size=None):
        """Draws from [low, high), matching numpy's Generator.integers."""
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:  # pragma: no cover
        return f"RngState(seed={self.seed})"
