from __future__ import annotations

from enum import IntEnum

import numpy as np


class Purpose(IntEnum):
    """What a random stream is used for. Values are part of the stream key and must not change."""

    TRAFFIC_NORMAL = 1
    TRAFFIC_URGENT = 2
    MAC = 3
    RADIO = 4


class RngStream:
    """
    A deterministic random stream keyed by `(master seed, node id, purpose)`.

    Streams never share generator state, so draws on one stream cannot perturb another.
    """

    def __init__(self, master_seed: int, node: int, purpose: Purpose):
        self.stream_id = (node, purpose)
        seed_seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(node, int(purpose)))
        self._gen = np.random.Generator(np.random.PCG64(seed_seq))

    def uniform(self) -> float:
        """Next draw in [0, 1)."""
        return float(self._gen.random())

    def integers(self, high: int) -> int:
        """Next integer draw in [0, high)."""
        return int(self._gen.integers(0, high))

    def exponential(self, mean: float) -> float:
        return float(self._gen.exponential(mean))


def rng_uniform(stream: RngStream) -> float:
    return stream.uniform()
