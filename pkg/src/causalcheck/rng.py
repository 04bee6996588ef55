"""Counter-based random streams.

Every draw is a pure function of ``(seed, stream name, row index)``: the
stream name is hashed into the upper 64 bits of a Philox4x64 key, and row
``i`` receives the ``i``-th 64-bit output of that keyed counter sequence.
Any row range can therefore be generated independently, so chunked or
parallel sampling reproduces the same bits as a single pass.
"""

from __future__ import annotations

import hashlib

import numpy as np
from scipy.special import ndtri

GENERATOR = "philox4x64-10"
_MASK64 = (1 << 64) - 1
_OUTPUTS_PER_COUNTER = 4


def stream_id(name: str) -> int:
    return int.from_bytes(hashlib.blake2b(name.encode(), digest_size=8).digest(), "little")


class CounterStreams:
    def __init__(self, seed: int):
        if not 0 <= seed <= _MASK64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = seed

    def raw(self, stream: str, start: int, stop: int) -> np.ndarray:
        if stop < start or start < 0:
            raise ValueError("bad row range")
        bits = np.random.Philox(key=self.seed | (stream_id(stream) << 64))
        skip = start % _OUTPUTS_PER_COUNTER
        bits.advance(start // _OUTPUTS_PER_COUNTER)
        return bits.random_raw(skip + stop - start)[skip:]

    def uniform(self, stream: str, start: int, stop: int) -> np.ndarray:
        """Doubles in the open interval (0, 1)."""
        r = self.raw(stream, start, stop)
        return ((r >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53

    def normal(self, stream: str, start: int, stop: int) -> np.ndarray:
        """Standard normals by inverse CDF."""
        return ndtri(self.uniform(stream, start, stop))
