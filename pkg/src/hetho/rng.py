"""Counter-based random streams for reproducible parallel simulation.

Every random quantity of a replication is drawn from a Philox generator
keyed by ``(base_seed, replication, stream, ...)`` through
:class:`numpy.random.SeedSequence` spawn keys.  A stream therefore depends
only on its key, never on how many draws other streams made or on which
worker process runs it, so parallel and serial runs are bit-identical.
"""
from __future__ import annotations

import numpy as np

from .model import ConfigError

FIELD = 0  # key (replication, FIELD, tier)
USERS = 1  # key (replication, USERS)
MOTION = 2  # key (replication, MOTION, ue)

MAX_SEED = 2**64 - 1


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return seed


def stream(base_seed: int, *key: int) -> np.random.Generator:
    """Independent Philox generator for the given spawn key."""
    ss = np.random.SeedSequence(check_seed(base_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
