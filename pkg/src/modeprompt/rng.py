"""Deterministic pseudo-random numbers for reproducible experiments.

The generator is SplitMix64 (Steele, Lea & Flood's 64-bit mixer) driving a
Box-Muller transform for Gaussians.  It is implemented here, rather than
delegating to numpy's Generator, so that seeds map to the exact same streams
on every platform and numpy version; checkpoints and golden test values
depend on that stability.

Streams are cheap to fork: ``Rng(seed).fork(tag)`` derives an independent
child stream from a string tag, which keeps unrelated draws (frozen weights,
adapter init, data generation, batch order) from aliasing each other.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    z = z ^ (z >> 31)
    return state, z


def _mix(a: int, b: int) -> int:
    _, z = _splitmix64((a ^ (b * 0x9E3779B97F4A7C15)) & _MASK)
    return z


class Rng:
    """SplitMix64 stream with uniform, Gaussian and integer draws."""

    def __init__(self, seed: int):
        self._state = seed & _MASK
        self._spare_gauss: float | None = None

    def fork(self, tag: str) -> "Rng":
        """Derive an independent child stream from a string tag."""
        h = 0xCBF29CE484222325
        for ch in tag.encode("utf-8"):
            h = ((h ^ ch) * 0x100000001B3) & _MASK
        return Rng(_mix(self._state, h))

    def next_u64(self) -> int:
        self._state, z = _splitmix64(self._state)
        return z

    def uniform(self) -> float:
        # 53-bit mantissa in [0, 1)
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def integer(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection (unbiased)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def gauss(self) -> float:
        """Standard normal via Box-Muller; pairs are cached."""
        if self._spare_gauss is not None:
            z = self._spare_gauss
            self._spare_gauss = None
            return z
        u1 = self.uniform()
        while u1 <= 0.0:
            u1 = self.uniform()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._spare_gauss = r * math.sin(theta)
        return r * math.cos(theta)

    def gauss_array(self, shape, sigma: float = 1.0) -> np.ndarray:
        """Array of i.i.d. N(0, sigma^2) draws, filled in C order."""
        n = int(np.prod(shape))
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            out[i] = self.gauss()
        return sigma * out.reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of range(n)."""
        perm = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.integer(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def choice(self, n: int, size: int) -> np.ndarray:
        """``size`` distinct indices from range(n), order randomized."""
        if size > n:
            raise ValueError(f"cannot draw {size} distinct values from {n}")
        return self.permutation(n)[:size]
