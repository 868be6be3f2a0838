"""Seedable, splittable xorshift generator.

xorshift64* (Vigna 2014): state update ``x ^= x >> 12; x ^= x << 25;
x ^= x >> 27`` and output ``x * 0x2545F4914F6CDD1D mod 2**64``. Seeds and
child streams are derived with splitmix64 (increment 0x9E3779B97F4A7C15,
multipliers 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB), so a zero state is
impossible and children of distinct keys are decorrelated. Everything is
plain 64-bit integer arithmetic, hence bit-reproducible.
"""

from __future__ import annotations

import math

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
XORSHIFT_MULT = 0x2545F4914F6CDD1D


def splitmix64(z: int) -> int:
    z = (z + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class Xorshift64Star:
    __slots__ = ("_state", "_seed")

    def __init__(self, seed: int = 0):
        self._seed = int(seed) & MASK64
        state = splitmix64(self._seed)
        self._state = state or GOLDEN

    def next_u64(self) -> int:
        x = self._state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self._state = x
        return (x * XORSHIFT_MULT) & MASK64

    def random(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randint(self, lo: int, hi: int) -> int:
        """Integer in [lo, hi] inclusive."""
        span = hi - lo + 1
        return lo + (self.next_u64() * span >> 64)

    def choice(self, seq):
        return seq[self.randint(0, len(seq) - 1)]

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(0, i)
            items[i], items[j] = items[j], items[i]

    def dirichlet_ones(self, k: int) -> list[float]:
        """Uniform point on the (k-1)-simplex."""
        e = [-math.log1p(-self.random()) for _ in range(k)]
        s = math.fsum(e)
        return [v / s for v in e]

    def split(self, key: int) -> "Xorshift64Star":
        """Independent child stream; depends only on this seed and ``key``."""
        return Xorshift64Star(splitmix64(self._seed ^ splitmix64(int(key) & MASK64)))
