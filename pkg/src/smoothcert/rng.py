"""Named, counter-based random streams derived from one master seed.

Every consumer asks for ``stream(seed, name, *indices)``; the key is hashed
into a Philox key, so the numbers a sample sees depend only on its own
coordinates and never on scheduling order.
"""

import zlib

import numpy as np

__all__ = ["stream", "split"]


def _seed_words(seed: int, name: str, indices) -> list:
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(name.encode("utf-8"))]
    words.extend(int(i) for i in indices)
    return words


def stream(seed: int, name: str, *indices: int) -> np.random.Generator:
    ss = np.random.SeedSequence(_seed_words(seed, name, indices))
    return np.random.Generator(np.random.Philox(ss))


def split(rng: np.random.Generator, n: int) -> list:
    """Independent child generators; deterministic given ``rng``'s seed."""
    return rng.spawn(n)
