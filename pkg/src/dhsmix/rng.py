"""Portable seeded randomness.

Every random draw in the package comes from SplitMix64 (Steele, Lea & Flood,
2014), chosen because it is a few lines in any language and therefore lets
masks and dataset builds be reproduced bit-exactly elsewhere:

    state = (state + 0x9E3779B97F4A7C15) mod 2**64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2**64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) mod 2**64
    output z ^ (z >> 31)

A uniform float in [0, 1) is ``(output >> 11) * 2**-53``. Per-item streams are
seeded with ``root_seed XOR item_hash`` where ``item_hash`` is the first 8
bytes (little-endian) of the BLAKE2b digest of the item key.
"""

from __future__ import annotations

import hashlib

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
DEFAULT_SEED = 20220725


def stable_hash(key: str) -> int:
    return int.from_bytes(hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest(), "little")


def derive_seed(root_seed: int, key: str) -> int:
    return (root_seed ^ stable_hash(key)) & MASK64


class SplitMix64:
    def __init__(self, seed: int):
        if seed < 0 or seed > MASK64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.state = seed

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * MIX1) & MASK64
        z = ((z ^ (z >> 27)) * MIX2) & MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def integers(self, low: int, high: int) -> int:
        """Unbiased integer in [low, high) by rejection sampling."""
        n = high - low
        if n <= 0:
            raise ValueError(f"empty range [{low}, {high})")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return low + x % n

    def choice(self, seq):
        return seq[self.integers(0, len(seq))]
