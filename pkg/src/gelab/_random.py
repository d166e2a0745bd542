"""Seed derivation.

Every random stream is a PCG64 generator (``numpy.random.default_rng``) whose
seed is derived by hashing ``(master_seed, *tags)``. Adding a new trial or a new
purpose tag never perturbs the streams that already exist.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(master_seed, *tags):
    """Return a 64-bit seed that depends only on ``master_seed`` and ``tags``."""
    h = hashlib.sha256()
    h.update(str(int(master_seed) & _MASK64).encode())
    for tag in tags:
        h.update(b"\x1f")
        h.update(str(tag).encode())
    return int.from_bytes(h.digest()[:8], "little")


def rng_for(master_seed, *tags):
    """Generator for the substream ``(master_seed, *tags)``."""
    return np.random.default_rng(derive_seed(master_seed, *tags))
