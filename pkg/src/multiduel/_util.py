"""Small RNG helpers shared by the run loops."""

from __future__ import annotations

import numpy as np


def spawn_streams(rng, n: int) -> list[np.random.Generator]:
    """Derive ``n`` independent child generators from a seed or Generator."""
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    return gen.spawn(n)


class UniformStream:
    """Block-buffered uniform draws from a Generator.

    Produces the same value sequence as repeated ``rng.random()`` calls but
    amortizes the per-call overhead, which dominates tight simulation loops.
    """

    __slots__ = ("_rng", "_block", "_buf", "_pos")

    def __init__(self, rng: np.random.Generator, block: int = 8192):
        self._rng = rng
        self._block = block
        self._buf = rng.random(block)
        self._pos = 0

    def next(self) -> float:
        if self._pos == self._block:
            self._buf = self._rng.random(self._block)
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n); inverse-CDF on one uniform draw."""
        v = int(self.next() * n)
        return n - 1 if v >= n else v
