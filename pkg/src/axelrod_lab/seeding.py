"""Deterministic 64-bit seed handling and replica stream derivation.

Every source of randomness in the package is a numpy ``Generator`` built
from a single 64-bit seed. Experiments derive one independent seed per
replica (and per purpose within a replica) by hashing ``(base, path...)``
with splitmix64, so replicas can run serially or in parallel and still
consume identical streams.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def check_seed(seed: int) -> int:
    """Validate a 64-bit unsigned seed and return it as a plain int."""
    s = int(seed)
    if s < 0 or s > MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed!r}")
    return s


def splitmix64(x: int) -> int:
    """One splitmix64 mixing step (public-domain finalizer constants)."""
    x = (x + _GOLDEN) & MASK64
    z = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(base: int, *path: int) -> int:
    """Hash a base seed and an integer path into an independent 64-bit seed.

    ``derive_seed(base, r)`` is the stream seed of replica ``r``;
    ``derive_seed(base, r, k)`` splits a replica's randomness into
    sub-streams (config sampling vs dynamics, ...). The chain is a plain
    splitmix64 absorb of each path element, stable across platforms.
    """
    h = splitmix64(check_seed(base))
    for p in path:
        h = splitmix64((h ^ splitmix64(int(p) & MASK64)) & MASK64)
    return h


def rng_from_seed(seed: int) -> np.random.Generator:
    """PCG64 generator for a validated 64-bit seed."""
    return np.random.Generator(np.random.PCG64(check_seed(seed)))
