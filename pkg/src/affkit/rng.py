"""Deterministic random streams.

The bundled generator is numpy's PCG64. Per-sample substreams are derived
by mixing (seed, index) through the SplitMix64 finalizer:

    z = (seed + (index + 1) * 0x9E3779B97F4A7C15) mod 2**64
    z ^= z >> 30;  z = z * 0xBF58476D1CE4E5B9 mod 2**64
    z ^= z >> 27;  z = z * 0x94D049BB133111EB mod 2**64
    z ^= z >> 31

The mixed value seeds PCG64 directly, so any implementation of SplitMix64
plus PCG64 reproduces the streams.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix(seed: int, index: int) -> int:
    """SplitMix64 finalizer over (seed, index); returns a 64-bit substream seed."""
    z = (seed + (index + 1) * _GOLDEN) & _MASK64
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK64
    z ^= z >> 31
    return z


def generator(seed: int) -> np.random.Generator:
    """PCG64 generator seeded with a 64-bit integer."""
    return np.random.Generator(np.random.PCG64(seed & _MASK64))


def substream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for substream `index` of `seed`."""
    return generator(mix(seed, index))
