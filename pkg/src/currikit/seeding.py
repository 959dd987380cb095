"""Deterministic per-component random streams.

Every source of randomness in the toolkit is derived from a single run seed
through numpy's SeedSequence splitting: a component is addressed by a path of
string/int labels, hashed into a spawn key. Streams are independent of each
other and of the order in which they are created.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_part(part: str | int) -> int:
    if isinstance(part, bool):
        raise TypeError("bool is not a valid stream label")
    if isinstance(part, int):
        if part < 0:
            raise ValueError("integer stream labels must be non-negative")
        return part
    return zlib.crc32(part.encode("utf-8"))


def component_rng(seed: int, *path: str | int) -> np.random.Generator:
    """Generator for the component addressed by `path`, derived from `seed`."""
    key = tuple(_key_part(p) for p in path)
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))
