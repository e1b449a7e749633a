"""Keyed random substreams.

Every random draw in the package comes from a generator derived from a root
seed plus a tuple of integer keys, so results never depend on call order or
on how work is scheduled across processes.
"""

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1

# stream identifiers
AUGMENT = 1
INIT = 2
BOOTSTRAP = 3
DATA_Z = 4
DATA_X = 5
DATA_Y = 6
PHASE1 = 7
PHASE2 = 8
SPLIT = 9


def substream(seed, *keys):
    """Return a generator keyed by ``(seed, *keys)``."""
    entropy = [int(seed) & MASK64] + [int(k) & MASK64 for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def mix_seed(*parts):
    """Deterministic 64-bit mix of integers and strings."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(repr(p).encode())
        h.update(b"\x00")
    return int.from_bytes(h.digest(), "little")
