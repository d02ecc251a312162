"""Deterministic 64-bit LCG used for all seeded sampling.

The generator is a plain linear congruential generator with Knuth's
MMIX constants,

    state <- (6364136223846793005 * state + 1442695040888963407) mod 2^64,

and uniform doubles taken from the top 53 bits.  Problem generators and
samplers use this instead of library RNGs so that instances are
reproducible from the seed alone, independent of any library version.
"""

from __future__ import annotations

import numpy as np

_A = 6364136223846793005
_C = 1442695040888963407
_MASK = (1 << 64) - 1


class Lcg64:
    """64-bit LCG yielding uniform doubles and arrays."""

    def __init__(self, seed: int):
        self.state = (int(seed) ^ 0x9E3779B97F4A7C15) & _MASK
        # warm up so that small seeds decorrelate
        for _ in range(4):
            self._next()

    def _next(self) -> int:
        self.state = (_A * self.state + _C) & _MASK
        return self.state

    def uniform(self) -> float:
        """Uniform double in [0, 1)."""
        return (self._next() >> 11) * (1.0 / (1 << 53))

    def uniform_signed(self) -> float:
        """Uniform double in [-1, 1)."""
        return 2.0 * self.uniform() - 1.0

    def vector(self, n: int) -> np.ndarray:
        """Array of n uniform doubles in [-1, 1)."""
        return np.array([self.uniform_signed() for _ in range(n)])

    def matrix(self, rows: int, cols: int) -> np.ndarray:
        return self.vector(rows * cols).reshape(rows, cols)
