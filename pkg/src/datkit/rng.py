"""Portable deterministic random numbers.

Everything stochastic in the toolkit (synthetic textures, jitter, detector
noise) draws from SplitMix64 so that identical seeds give identical output
regardless of platform, interpreter, or numpy version.  The generator is
counter-based: draw ``i`` of a stream is ``mix64(seed + (i + 1) * GOLDEN)``,
which lets bulk draws vectorize in numpy without changing the sequence.

Substreams are derived by folding string/integer tokens into the seed
(`derive_seed`), so independent concerns (texture vs. jitter vs. per-frame
detector noise) never share a stream.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_INV_2_53 = 1.0 / (1 << 53)


def mix64(z: int) -> int:
    """SplitMix64 finalizer (Steele, Lea & Flood 2014)."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _fold_token(state: int, token: int | str) -> int:
    if isinstance(token, str):
        # FNV-1a over UTF-8 bytes, then mixed; stable across platforms.
        h = 0xCBF29CE484222325
        for b in token.encode("utf-8"):
            h = ((h ^ b) * 0x100000001B3) & _MASK
        token = h
    return mix64(state ^ mix64(token & _MASK))


def derive_seed(seed: int, *tokens: int | str) -> int:
    """Derive an independent stream seed from a root seed and tokens."""
    state = mix64(seed & _MASK)
    for token in tokens:
        state = _fold_token(state, token)
    return state


class SplitMix64:
    """Counter-based SplitMix64 stream with scalar and vectorized draws."""

    def __init__(self, seed: int):
        self._seed = seed & _MASK
        self._counter = 0

    def split(self, *tokens: int | str) -> "SplitMix64":
        """A new independent stream; does not consume from this one."""
        return SplitMix64(derive_seed(self._seed, *tokens))

    def next_u64(self) -> int:
        self._counter += 1
        return mix64(self._seed + self._counter * _GOLDEN)

    def uniform(self) -> float:
        """One double in [0, 1)."""
        return (self.next_u64() >> 11) * _INV_2_53

    def normal(self, sigma: float = 1.0) -> float:
        """One Gaussian draw via Box-Muller; consumes two uniforms."""
        u1 = ((self.next_u64() >> 11) + 1) * _INV_2_53  # (0, 1]
        u2 = (self.next_u64() >> 11) * _INV_2_53
        return sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def uniforms(self, n: int) -> np.ndarray:
        """``n`` doubles in [0, 1), identical to ``n`` scalar draws."""
        out = (self._raw(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        return out

    def normals(self, n: int, sigma: float = 1.0) -> np.ndarray:
        """``n`` Gaussian draws, identical to ``n`` scalar ``normal`` calls."""
        raw = self._raw(2 * n)
        u1 = ((raw[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
        u2 = (raw[1::2] >> np.uint64(11)).astype(np.float64) * _INV_2_53
        return sigma * np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        z = np.uint64(self._seed) + idx * np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))
