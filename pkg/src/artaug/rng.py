"""Deterministic seeding and sampling.

Every randomized step in the toolkit must be bit-reproducible across
platforms, interpreter versions, and library upgrades, because output
file names are content-addressed and interrupted runs are resumed by
recomputing. Stdlib ``random`` and numpy's distribution methods only
guarantee their streams within a version, so sampling is done with a
SplitMix64 generator and seeds are derived with keyed BLAKE2b.
"""

from __future__ import annotations

import hashlib

_MASK64 = (1 << 64) - 1


def derive_seed(*parts: object) -> int:
    """Derive a 64-bit seed from an arbitrary tuple of parts.

    Parts are rendered with repr, so use only ints and strings.
    """
    payload = "\x1f".join(repr(p) for p in parts).encode("utf-8")
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "big")


class DetRng:
    """SplitMix64-based generator with the few sampling ops we need."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], both ends inclusive."""
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        span = hi - lo + 1
        return lo + self.next_u64() % span
