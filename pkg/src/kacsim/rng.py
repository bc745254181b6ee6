"""Reproducible random streams.

Every random draw comes from a Philox4x64 counter-based generator.  Its
128-bit key combines the 64-bit master seed and the replica index,

    key = master_seed + replica * 2**64,

so ``(master_seed, replica)`` names an independent stream and replica
ensembles give identical results however they are scheduled across threads.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def stream(master_seed: int, replica: int = 0) -> np.random.Generator:
    """Generator for replica ``replica`` of the experiment seeded ``master_seed``."""
    if replica < 0:
        raise ValueError("replica index must be non-negative")
    key = (int(master_seed) & _MASK64) | (int(replica) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def streams(master_seed: int, count: int, offset: int = 0):
    return [stream(master_seed, offset + r) for r in range(count)]
