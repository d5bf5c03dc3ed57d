"""Deterministic 64-bit generator shared by every execution backend.

SplitMix64 in counter form: draw k of a stream is mix(seed + k * GAMMA),
so a block of draws can be produced vectorised while staying bit-identical
to the one-at-a-time sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MULT1 = 0xBF58476D1CE4E5B9
_MULT2 = 0x94D049BB133111EB

# Raw perturbation draws are 17-bit signed: [-2**16, 2**16).
RAW_BITS = 17
_RAW_MASK = (1 << RAW_BITS) - 1
_RAW_HALF = 1 << (RAW_BITS - 1)


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MULT1) & _MASK64
    z = ((z ^ (z >> 27)) * _MULT2) & _MASK64
    return z ^ (z >> 31)


@dataclass
class SplitMix64:
    """Stateful view over a SplitMix64 stream.

    `counter` is the number of draws already consumed; equal (seed, counter)
    pairs always produce the same continuation.
    """

    seed: int
    counter: int = 0

    def __post_init__(self) -> None:
        self.seed &= _MASK64

    def next_u64(self) -> int:
        self.counter += 1
        return _mix((self.seed + self.counter * _GAMMA) & _MASK64)

    def next_raw(self) -> int:
        """One signed 17-bit draw, uniform over [-2**16, 2**16)."""
        return (self.next_u64() & _RAW_MASK) - _RAW_HALF

    def next_raw_block(self, n: int) -> np.ndarray:
        """`n` signed 17-bit draws as int64, identical to n calls of next_raw."""
        ks = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        z = np.uint64(self.seed) + ks * np.uint64(_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MULT1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MULT2)
        z = z ^ (z >> np.uint64(31))
        return (z & np.uint64(_RAW_MASK)).astype(np.int64) - _RAW_HALF

    def clone(self) -> "SplitMix64":
        return SplitMix64(self.seed, self.counter)
