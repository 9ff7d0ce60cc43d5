"""Portable seeded random streams: splitmix64 seeding xoshiro256**.

Every draw is derived from the raw 64-bit output sequence, so a given
``(seed, stream_id)`` yields the same values on every platform and backend.
"""

from __future__ import annotations

import numpy as np

from . import kernels

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step; returns ``(new_state, output)``."""
    state = (state + _GOLDEN) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


class Rng:
    """xoshiro256** generator addressed by ``(seed, stream_id)``.

    Streams with different ids are independent for practical purposes; use
    :meth:`spawn` to derive per-worker or per-purpose streams.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        # mix the stream id into the splitmix state before expanding to 256 bits
        _, h = splitmix64(self.stream_id ^ 0xD1B54A32D192ED03)
        sm = self.seed ^ h
        words = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            words.append(out)
        if not any(words):
            words[0] = 1
        self._state = np.array(words, dtype=np.uint64)

    def __repr__(self):
        return f"Rng(seed={self.seed}, stream_id={self.stream_id})"

    def spawn(self, stream_id: int) -> "Rng":
        return Rng(self.seed, (self.stream_id * _GOLDEN + stream_id + 1) & _MASK64)

    def next_u64(self, n: int) -> np.ndarray:
        out = np.empty(int(n), dtype=np.uint64)
        if n:
            kernels.xoshiro_fill(self._state, out)
        return out

    def random(self, shape=()) -> np.ndarray:
        """Uniform float64 in [0, 1) with 53 random bits."""
        n = int(np.prod(shape, dtype=np.int64))
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
        return u.reshape(shape)

    def uniform(self, low=0.0, high=1.0, shape=()) -> np.ndarray:
        return low + (high - low) * self.random(shape)

    def normal(self, shape=(), mean=0.0, std=1.0) -> np.ndarray:
        n = int(np.prod(shape, dtype=np.int64))
        m = (n + 1) // 2
        u1 = 1.0 - self.random(m)  # (0, 1]
        u2 = self.random(m)
        rad = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([rad * np.cos(2 * np.pi * u2), rad * np.sin(2 * np.pi * u2)])[:n]
        return (mean + std * z).reshape(shape)

    def integers(self, low: int, high: int, shape=()) -> np.ndarray:
        """Uniform integers in the closed range [low, high]."""
        span = high - low + 1
        if span <= 0:
            raise ValueError(f"empty integer range [{low}, {high}]")
        return low + np.floor(self.random(shape) * span).astype(np.int64)

    def bernoulli(self, p: float, shape=()) -> np.ndarray:
        """Boolean draws; True with probability ``p`` (threshold on uniforms)."""
        return self.random(shape) < p

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.random(n), kind="stable")
