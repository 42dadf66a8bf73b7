"""Seed derivation: every random stream is keyed by (master seed, tag, ...)."""
from __future__ import annotations

import zlib

import numpy as np

RNG_NAME = "numpy.Philox/SeedSequence"
RNG_VERSION = 1


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


def derive_seed(seed: int, *keys) -> int:
    """Deterministic 63-bit child seed for ``(seed, *keys)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(k) for k in keys))
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def make_rng(seed: int, *keys) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))
