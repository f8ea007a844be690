"""Deterministic 64-bit random number generator.

Every random draw in this package goes through :class:`RngState`, a
splitmix64 generator (shift/multiply/xor on 64-bit unsigned state).  The
update rule is fixed here rather than delegated to the platform RNG so that
a seed reproduces the identical stream on every machine and Python version.

Update rule for one output word::

    state = (state + 0x9E3779B97F4A7C15) mod 2^64
    z = state
    z = ((z XOR (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2^64
    z = ((z XOR (z >> 27)) * 0x94D049BB133111EB) mod 2^64
    output = z XOR (z >> 31)
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class RngState:
    """Single-owner deterministic random stream seeded by a 64-bit integer.

    Instances are not thread safe; parallel work should obtain independent
    streams via :meth:`derive`.
    """

    __slots__ = ("seed", "_state")

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        self._state = self.seed

    def __repr__(self) -> str:
        return f"RngState(seed={self.seed})"

    def next_u64(self) -> int:
        """Return the next 64-bit unsigned output word."""
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def uniform(self, lo: float, hi: float) -> float:
        """Uniform float in [lo, hi)."""
        return lo + (hi - lo) * self.random()

    def uniform_array(self, lo: float, hi: float, shape) -> np.ndarray:
        """Array of independent uniforms in [lo, hi)."""
        n = int(np.prod(shape)) if shape else 1
        vals = [self.uniform(lo, hi) for _ in range(n)]
        return np.array(vals, dtype=np.float64).reshape(shape)

    def below(self, n: int) -> int:
        """Uniform integer in {0, ..., n-1}, bias-free via rejection."""
        if n <= 0:
            raise ValueError(f"below() needs n >= 1, got {n}")
        limit = _MASK64 + 1 - ((_MASK64 + 1) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def choice_weighted(self, probs) -> int:
        """Index sampled according to the probability vector `probs`."""
        u = self.random()
        acc = 0.0
        for idx, p in enumerate(probs):
            acc += p
            if u < acc:
                return idx
        return len(probs) - 1

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> list[int]:
        """Random permutation of range(n)."""
        items = list(range(n))
        self.shuffle(items)
        return items

    def derive(self, index: int) -> "RngState":
        """Independent child stream for stream number `index`.

        The child seed is the parent seed XOR the index, passed once through
        the generator's output mix so that adjacent indices land far apart.
        """
        return RngState(RngState(self.seed ^ (index & _MASK64)).next_u64())
