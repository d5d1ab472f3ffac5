"""Deterministic stream derivation for seeded, schedule-independent runs.

Every random stream in the package is a pure function of a tuple of integer
keys (user seed, context tag, replicate index, ...), so results never depend
on execution order or parallelism degree.  Python's salted hash() must not
be used for this; keys go through SHA-256 instead.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_key(*parts) -> int:
    """Stable 64-bit key from arbitrary (repr-stable) parts."""
    blob = "\x1f".join(repr(p) for p in parts).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big")


def derive_rng(*parts) -> np.random.Generator:
    """Generator whose stream depends only on the given parts."""
    ints = [p if isinstance(p, int) and p >= 0 else derive_key(p) for p in parts]
    return np.random.default_rng(np.random.SeedSequence(ints))
