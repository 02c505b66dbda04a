"""Deterministic pseudo-random streams.

The simulator must produce byte-identical output for a given seed on any
platform, so randomness comes from a self-contained SplitMix64 generator
rather than ``random.Random``. Independent streams are derived from
(seed, label...) so that inserting a node or an attack never perturbs the
draws of any other entity.
"""

from __future__ import annotations

import hashlib

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64: tiny, fast, and fully portable (pure 64-bit int math)."""

    __slots__ = ("_state",)

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) / float(1 << 53)

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive."""
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        span = hi - lo + 1
        return lo + self.next_u64() % span


def stream(seed: int, *labels: object) -> SplitMix64:
    """Derive an independent generator for (seed, labels...).

    The derivation hashes the textual key, so streams are stable no matter
    what order entities are created in.
    """
    key = f"{seed}|" + "|".join(str(x) for x in labels)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return SplitMix64(int.from_bytes(digest[:8], "big"))
