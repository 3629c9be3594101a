"""Counter-based random streams.

A stream is identified by ``(master_seed, stream_index)``. The generator behind it
is a Philox bit generator keyed through :class:`numpy.random.SeedSequence`, so
draws depend only on the pair and never on how work is scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) <= _MASK64:
            raise ValueError("master_seed must fit in 64 unsigned bits")
        if int(self.stream_index) < 0:
            raise ValueError("stream_index must be non-negative")

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        seq = np.random.SeedSequence(int(self.master_seed), spawn_key=(int(self.stream_index),))
        return np.random.Generator(np.random.Philox(seq))

    def child(self, index: int) -> RngStream:
        """Independent sub-stream, e.g. one per replica or per work block."""
        seq = np.random.SeedSequence([int(self.master_seed), int(self.stream_index), int(index)])
        derived = int(seq.generate_state(1, np.uint64)[0])
        return RngStream(derived, 0)


def as_stream(rng: RngStream | int) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    return RngStream(int(rng))
