"""Seed splitting for reproducible, order-independent random streams.

Every randomized component derives its generator from the master seed and a
tag (chain index, beacon id, or a component name) through a SplitMix64
finalizer. Streams are therefore independent of execution order, so parallel
and sequential runs produce identical output.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One SplitMix64 output step applied to ``x``."""
    z = (x + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _tag_int(tag: int | str) -> int:
    if isinstance(tag, str):
        return zlib.crc32(tag.encode("utf-8"))
    return int(tag) & _MASK


def derive_seed(seed: int, *tags: int | str) -> int:
    """Mix ``seed`` with each tag in turn: ``x <- splitmix64(x ^ tag * golden)``.

    String tags are reduced with CRC-32 so the mapping is stable across
    interpreter runs (unlike ``hash``).
    """
    x = splitmix64(int(seed) & _MASK)
    for tag in tags:
        x = splitmix64(x ^ ((_tag_int(tag) * _GOLDEN) & _MASK))
    return x


def make_rng(seed: int, *tags: int | str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *tags)))
