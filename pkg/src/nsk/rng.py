"""Counter-based random streams keyed by (seed, role, indices).

Every random object (an initial vector, one weight matrix of one channel of
one layer, ...) gets its own Philox stream whose key is derived from the
run seed and the object's coordinates. Draws therefore never depend on the
order in which objects are generated, which makes Monte Carlo results
independent of how the work is scheduled.
"""

from __future__ import annotations

import numpy as np

__all__ = ["ROLES", "stream", "derive_seed"]

ROLES = {
    "initial": 0,
    "readout": 1,
    "matrix": 2,
    "bias": 3,
    "realization": 4,
    "path": 5,
}


def _seed_sequence(seed: int, key) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the object identified by ``key``."""
    return np.random.Generator(np.random.Philox(_seed_sequence(seed, key)))


def derive_seed(seed: int, *key: int, role: str = "realization") -> int:
    """A 64-bit child seed, e.g. ``derive_seed(seed, r)`` for realisation ``r``."""
    words = _seed_sequence(seed, (ROLES[role],) + key).generate_state(2, np.uint32)
    return int(words[0]) | (int(words[1]) << 32)
