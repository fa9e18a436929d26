"""Deterministic per-replication seeds.

``seed_stream(master, k)`` packs an injective mix of the master seed above
the 64-bit replication counter, so the map is injective in ``(master, k)``
for any nonnegative master and ``0 <= k < 2**64``.  Seeds may be nested.  The result is a nonnegative integer
accepted by :func:`numpy.random.default_rng`.  This construction is frozen:
changing it changes every stored experiment.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """The SplitMix64 finalizer; a bijection on 64-bit integers."""
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def splitmix64_array(x) -> np.ndarray:
    """Vectorized :func:`splitmix64` on ``uint64`` arrays."""
    z = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _head(master: int) -> int:
    """Masters below 2**64 map through one bijective mix, landing below 2**64;
    wider masters (for example seeds produced by :func:`seed_stream` itself)
    pass through unchanged and stay at or above 2**64, so the map is
    injective on all nonnegative integers."""
    master = int(master)
    if master < 0:
        raise ValueError("master seed must be nonnegative")
    return splitmix64(master) if master <= MASK64 else master


def seed_stream(master: int, replication: int) -> int:
    if replication < 0 or replication > MASK64:
        raise ValueError("replication counter must fit in 64 bits")
    return (_head(master) << 64) | int(replication)


def rng_for(master: int, replication: int) -> np.random.Generator:
    return np.random.default_rng(seed_stream(master, replication))
