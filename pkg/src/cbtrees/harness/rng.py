"""Counter-based derivation of independent random streams.

A stream is identified by ``(master_seed, index)``.  Both are pushed through
the SplitMix64 finaliser (Steele, Lea and Flood, 2014):

    z += 0x9E3779B97F4A7C15
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z ^= z >> 31

and the two mixed words seed a PCG64 generator.  The stream of a replicate
depends only on its index, never on which worker runs it.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(z: int) -> int:
    z = (z + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stream_id(n_index: int, replicate: int, role: int = 0) -> int:
    """Pack (role, n index, replicate) into one 64-bit stream index."""
    if not (0 <= role < 1 << 8 and 0 <= n_index < 1 << 24 and 0 <= replicate < 1 << 32):
        raise ValueError("stream coordinates out of range")
    return (role << 56) | (n_index << 32) | replicate


def rng_stream(master_seed: int, index: int) -> np.random.Generator:
    a = splitmix64(master_seed & MASK64)
    b = splitmix64(a ^ (index & MASK64))
    return np.random.Generator(np.random.PCG64([a, b]))
