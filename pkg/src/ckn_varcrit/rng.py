"""Named random streams derived from a single seed.

Each consumer asks for a stream by name, so adding a new consumer never
shifts the draws seen by an existing one.
"""
from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, name: str) -> np.random.Generator:
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(key,)))
