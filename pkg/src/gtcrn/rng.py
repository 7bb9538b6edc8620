"""Counter-based random streams.

Replicate ``r`` of a run seeded with ``seed`` owns a disjoint family of Philox
substreams; substream ``k`` starts at counter ``(0, 0, k, r)`` under a key
derived from ``seed``.  Any replicate can therefore be regenerated in
isolation, which makes results independent of evaluation order and batching.
"""

from __future__ import annotations

import numpy as np

_BLOCK = 8
DIRECT_SUBSTREAM = 2**62


def run_key(seed: int) -> np.ndarray:
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must be a 64-bit nonnegative integer")
    return np.random.SeedSequence(seed).generate_state(2, np.uint64)


def derive_seed(seed: int, *labels: int) -> int:
    """A new 64-bit seed, deterministically derived from ``seed`` and integer labels."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(labels))
    return int(ss.generate_state(1, np.uint64)[0])


def generator(key: np.ndarray, replicate: int, substream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, substream, replicate]))


class ExpStream:
    """Unit-rate exponential gaps of one Poisson stream, drawn lazily in blocks."""

    __slots__ = ("_key", "_replicate", "_substream", "_gen", "_buf", "_pos")

    def __init__(self, key: np.ndarray, replicate: int, substream: int):
        self._key = key
        self._replicate = replicate
        self._substream = substream
        self._gen = None
        self._buf: list[float] = []
        self._pos = 0

    def next(self) -> float:
        if self._pos == len(self._buf):
            if self._gen is None:
                self._gen = generator(self._key, self._replicate, self._substream)
            self._buf = self._gen.standard_exponential(_BLOCK).tolist()
            self._pos = 0
        v = self._buf[self._pos]
        self._pos += 1
        return v


def poisson_points(key: np.ndarray, replicate: int, substream: int, upto: float) -> list[float]:
    """Arrival times of the unit Poisson stream up to internal time ``upto`` (inclusive)."""
    stream = ExpStream(key, replicate, substream)
    points = []
    s = stream.next()
    while s <= upto:
        points.append(s)
        s += stream.next()
    return points
