"""Deterministic, role-separated random streams.

Every stream is a PCG64 generator keyed by (session seed, role). Consuming
one role's stream never perturbs another's, so adding draws to e.g. the
channel does not shift Alice's bit sequence. PCG64 output is stable across
platforms for a fixed SeedSequence.
"""

from __future__ import annotations

import numpy as np

__all__ = ["ROLES", "stream", "derive_seed"]

# Fixed role indices; append only, never renumber (seeds are part of the
# reproducibility contract).
ROLES = {
    "alice_bits": 0,
    "alice_bases": 1,
    "bob_bases": 2,
    "channel": 3,
    "sampling": 4,
    "intensity": 5,
    "chsh": 6,
    "cv_alice": 7,
    "cv_noise": 8,
    "cv_basis": 9,
    "toeplitz": 10,
}


def stream(seed: int, role: str) -> np.random.Generator:
    """Independent generator for (seed, role)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(ROLES[role],))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(base_seed: int, index: int) -> int:
    """Deterministic 63-bit child seed for sweep/optimization point `index`."""
    ss = np.random.SeedSequence(entropy=(int(base_seed), int(index)))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
