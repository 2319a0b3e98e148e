"""Seeded random streams.

Every stochastic draw in the package flows through an :class:`RngStream`.
Streams are backed by numpy's Philox bit generator, a counter-based generator
whose draw sequence is fully determined by (seed, stream key) and is stable
across platforms and numpy versions. Independent concerns (arrival times,
turn choices, CV tagging, exploration, batch sampling, ...) each get their own
child stream so that changing how one consumer draws can never perturb
another.
"""

from __future__ import annotations

import numpy as np


class RngStream:
    """One named deterministic draw stream.

    A stream is identified by an integer seed plus a tuple key. Child streams
    derived with :meth:`child` are statistically independent of the parent and
    of each other.
    """

    __slots__ = ("seed", "key", "_gen")

    def __init__(self, seed: int, key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        self._gen = np.random.Generator(np.random.Philox(ss))

    def child(self, *indices: int) -> "RngStream":
        return RngStream(self.seed, self.key + tuple(indices))

    # -- scalar draws ------------------------------------------------------

    def random(self) -> float:
        """Uniform float in [0, 1)."""
        return float(self._gen.random())

    def uniform(self, low: float, high: float) -> float:
        return float(self._gen.uniform(low, high))

    def exponential(self, mean: float) -> float:
        return float(self._gen.exponential(mean))

    def integers(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        return int(self._gen.integers(0, n))

    def weighted_index(self, weights) -> int:
        """Index drawn proportionally to the given positive weights."""
        u = self.random() * float(np.sum(weights))
        acc = 0.0
        for i, w in enumerate(weights):
            acc += float(w)
            if u < acc:
                return i
        return len(weights) - 1  # guards float round-off on the last bin

    # -- array draws -------------------------------------------------------

    @property
    def generator(self) -> np.random.Generator:
        """The underlying numpy Generator, for vectorised draws."""
        return self._gen

    def derive_seed(self) -> int:
        """A fresh 63-bit seed drawn from this stream."""
        return int(self._gen.integers(0, 2**63 - 1))

    def __repr__(self) -> str:  # pragma: no cover
        return f"RngStream(seed={self.seed}, key={self.key})"
