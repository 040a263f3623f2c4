"""Seeded random streams.

Every stream is addressed by ``(master_seed, index, purpose)`` and built
from :class:`numpy.random.SeedSequence` with ``spawn_key=(index, purpose)``.
SeedSequence hashes the key into the generator state, so streams for
different trajectories or purposes are statistically independent and any
one of them can be rebuilt in isolation, whichever worker runs it.
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np


class Purpose(IntEnum):
    PROCESS = 0
    CHANNEL = 1
    DRIFT = 2
    PROBE_DIRECTIONS = 3
    FOURTH_MOMENT = 4


def stream(master_seed: int, index: int, purpose: Purpose) -> np.random.Generator:
    if master_seed < 0:
        raise ValueError("master seed must be non-negative")
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index), int(purpose)))
    return np.random.Generator(np.random.PCG64(ss))
