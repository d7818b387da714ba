"""Portable deterministic random streams.

splitmix64 expands a 64-bit seed into the 256-bit state of a xoshiro256**
generator. Both are tiny, fully specified, and give the same stream in any
language, which numpy's bit generators do not guarantee across versions.
"""

import math

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(state):
    """Advance a splitmix64 state, returning ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


class Xoshiro256:
    """xoshiro256** generator seeded through splitmix64."""

    def __init__(self, seed=0):
        sm = int(seed) & _MASK
        s = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            s.append(out)
        self._s = s

    def next_u64(self):
        s0, s1, s2, s3 = self._s
        x = (s1 * 5) & _MASK
        result = ((((x << 7) | (x >> 57)) & _MASK) * 9) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & _MASK
        self._s = [s0, s1, s2, s3]
        return result

    def random(self):
        """Uniform float in [0, 1) built from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low=0.0, high=1.0):
        return low + (high - low) * self.random()

    def randbelow(self, n):
        """Unbiased integer in ``[0, n)`` by rejection."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            v = self.next_u64()
            if v < limit:
                return v % n

    def randint(self, low, high):
        """Integer in the closed range ``[low, high]``."""
        return low + self.randbelow(high - low + 1)

    def normal(self):
        # Box-Muller, one variate per pair of uniforms; 1 - u keeps log finite
        u1 = 1.0 - self.random()
        u2 = self.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def uniform_array(self, shape, low=-1.0, high=1.0):
        n = int(np.prod(shape, dtype=np.int64))
        out = np.fromiter((self.random() for _ in range(n)), dtype=np.float64, count=n)
        return (low + (high - low) * out).reshape(shape)

    def normal_array(self, shape, std=1.0):
        n = int(np.prod(shape, dtype=np.int64))
        out = np.fromiter((self.normal() for _ in range(n)), dtype=np.float64, count=n)
        return (std * out).reshape(shape)

    def shuffle(self, items):
        """In-place Fisher-Yates shuffle of a list or 1-d array."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]
        return items
