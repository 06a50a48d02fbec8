"""Deterministic, key-derived random streams.

Every stochastic component derives its generator from a tuple of keys
(seed, purpose, ...) so that runs are reproducible and streams for one
seed are unaffected by which other seeds run in the same process.
"""

from __future__ import annotations

import hashlib

import numpy as np


def seed_words(*keys) -> list[int]:
    """Hash a key tuple into four 32-bit words for a SeedSequence."""
    raw = "\x1f".join(str(k) for k in keys).encode("utf-8")
    digest = hashlib.sha256(raw).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def stream(*keys) -> np.random.Generator:
    """Independent generator for the given key tuple."""
    return np.random.default_rng(np.random.SeedSequence(seed_words(*keys)))
