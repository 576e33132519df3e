"""Deterministic seed derivation.

A single master seed fans out to per-stage and per-sample seeds through
splitmix64, so any stage can be re-run in isolation and reproduce the full
run bit-for-bit.  Derivation rule::

    derive(seed, *keys) = fold(splitmix64(state ^ mix(key)) for key in keys)

where string keys are hashed with FNV-1a 64 and integer keys are mixed
through one splitmix64 round first.  All arithmetic is mod 2**64.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One splitmix64 scrambling round (Steele et al. constants)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return (x ^ (x >> 31)) & _MASK


def fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK
    return h


def derive(seed: int, *keys: str | int) -> int:
    """Derive a child seed from ``seed`` and a path of string/int keys."""
    state = splitmix64(seed & _MASK)
    for key in keys:
        if isinstance(key, str):
            mixed = fnv1a64(key)
        else:
            mixed = splitmix64(key & _MASK)
        state = splitmix64(state ^ mixed)
    return state


def rng_from(seed: int, *keys: str | int) -> np.random.Generator:
    """PCG64 generator seeded by the derived child seed."""
    return np.random.Generator(np.random.PCG64(derive(seed, *keys)))
