"""Seeded, splittable random streams.

Every consumer derives its generators from a ``SeedSequence`` keyed by the
user seed and a purpose tag, so different purposes never share draws and the
streams handed to parallel workers depend only on ``(seed, count)``.
"""

from __future__ import annotations

import zlib

import numpy as np


def _tag(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def seed_sequence(seed: int, purpose: str = "") -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, _tag(purpose)])


def generator(seed: int, purpose: str = "") -> np.random.Generator:
    """A single counter-based (Philox) generator."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, purpose)))


def generators(seed: int, count: int, purpose: str = "") -> list[np.random.Generator]:
    """``count`` independent Philox generators spawned from one seed."""
    children = seed_sequence(seed, purpose).spawn(int(count))
    return [np.random.Generator(np.random.Philox(c)) for c in children]
