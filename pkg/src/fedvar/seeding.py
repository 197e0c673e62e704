"""Replayable RNG streams keyed by (seed, purpose, indices...)."""

from __future__ import annotations

import zlib

import numpy as np


def purpose_key(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def derive_rng(seed: int, purpose: str, *indices: int) -> np.random.Generator:
    """Independent generator for one (seed, purpose, t, client, ...) tuple.

    The same tuple always yields the same stream, and distinct purposes never
    share one, so cohort draws, batch order and initialisation cannot
    interfere with each other.
    """
    entropy = [int(seed), purpose_key(purpose), *(int(i) for i in indices)]
    if any(e < 0 for e in entropy):
        raise ValueError(f"seed material must be non-negative: {entropy}")
    return np.random.default_rng(np.random.SeedSequence(entropy))
