"""Deterministic seed derivation.

Every stochastic component draws from a generator seeded by a value derived
from the run's master seed plus a tuple of string/int tags describing the
purpose ("scene", archetype, episode index, ...).  Derivation goes through
BLAKE2b so unrelated tags give statistically independent streams and the
mapping is stable across platforms and processes.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master: int, *tags) -> int:
    """Map (master seed, tag tuple) to a stable 63-bit seed."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master)).encode())
    for tag in tags:
        h.update(b"\x1f")
        h.update(str(tag).encode())
    return int.from_bytes(h.digest(), "big") >> 1


def rng_for(master: int, *tags) -> np.random.Generator:
    """A fresh PCG64 generator for one purpose."""
    return np.random.default_rng(derive_seed(master, *tags))
