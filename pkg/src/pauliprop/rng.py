"""Cross-platform deterministic PRNG for circuit generation.

xoshiro256** seeded through splitmix64, with the usual published constants.
Uniform doubles come from the top 53 bits, so identical seeds give identical
angle sequences on every platform and Python version.
"""

from __future__ import annotations

__all__ = ["Xoshiro256StarStar"]

_MASK = (1 << 64) - 1


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def _rotl(v: int, k: int) -> int:
    return ((v << k) | (v >> (64 - k))) & _MASK


class Xoshiro256StarStar:
    """xoshiro256** generator; state initialized via splitmix64(seed)."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK
        s = self.seed
        state = []
        for _ in range(4):
            s, word = _splitmix64(s)
            state.append(word)
        self._s = state

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK, 7) * 9) & _MASK
        t = (s[1] << 17) & _MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        """Uniform double in [low, high) from the top 53 bits."""
        u = (self.next_u64() >> 11) * (2.0**-53)
        return low + u * (high - low)
