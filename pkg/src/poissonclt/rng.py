"""Counter-based splittable random streams.

Every draw in the package is a pure function of (seed, stream, substream,
counter).  Streams are backed by numpy's Philox generator, keyed by the
128-bit integer  seed * 2^64 + stream * 2^32 + substream,  so substream
derivation is collision-free for up to 2^32 streams x 2^32 substreams per
seed.  Parallel replications use disjoint substreams and are reproducible
independently of scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK32 = 0xFFFFFFFF
_MASK64 = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class RandomStream:
    seed: int
    stream: int = 0
    substream: int = 0

    def __post_init__(self) -> None:
        if not (0 <= self.stream <= _MASK32 and 0 <= self.substream <= _MASK32):
            raise ValueError("stream and substream ids must fit in 32 bits")

    def key(self) -> int:
        return ((self.seed & _MASK64) << 64) | ((self.stream & _MASK32) << 32) | (
            self.substream & _MASK32
        )

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at counter 0 of this (sub)stream."""
        return np.random.Generator(np.random.Philox(key=self.key()))

    def with_stream(self, stream: int) -> RandomStream:
        return RandomStream(self.seed, stream, 0)

    def with_substream(self, substream: int) -> RandomStream:
        return RandomStream(self.seed, self.stream, substream)

    def substreams(self, n: int) -> list[RandomStream]:
        """n disjoint substreams of this stream (used for parallel replication)."""
        base = self.substream
        if base + n > _MASK32:
            raise ValueError("substream space exhausted")
        return [RandomStream(self.seed, self.stream, base + i) for i in range(n)]
