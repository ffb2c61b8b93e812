"""Seed derivation.

Every random draw in the package flows from one integer seed. Component
streams are derived with ``SeedSequence([seed, crc32(name), *extra])`` and fed
to a Philox counter-based generator, so a stream depends only on its name and
indices, never on how many other draws happened before it.
"""

from __future__ import annotations

import zlib

import numpy as np


def _entropy(seed: int, stream: tuple) -> list[int]:
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    words = [int(seed)]
    for part in stream:
        if isinstance(part, str):
            words.append(zlib.crc32(part.encode("utf-8")))
        else:
            words.append(int(part))
    return words


def make_rng(seed: int, *stream) -> np.random.Generator:
    """Return a Philox generator for the named stream under ``seed``."""
    ss = np.random.SeedSequence(_entropy(seed, stream))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *stream) -> int:
    """Derive a 32-bit child seed for the named stream."""
    ss = np.random.SeedSequence(_entropy(seed, stream))
    return int(ss.generate_state(1, dtype=np.uint32)[0])
