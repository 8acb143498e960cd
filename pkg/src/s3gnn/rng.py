"""Seeded counter-based random generator with a frozen bit stream.

The generator is SplitMix64 run in counter mode: draw ``k`` mixes the word
``seed + k * GOLDEN`` through two xor-multiply rounds.  The constants below
are part of the on-disk/on-paper contract of every experiment in this
package and must never change; equal seeds produce bit-identical streams on
every platform because all arithmetic is explicit 64-bit wraparound.

Uniform doubles take the top 53 bits of a draw, so values lie on the
``2**-53`` grid in ``[0, 1)``.
"""

from __future__ import annotations

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB
_INV_2_53 = 1.0 / (1 << 53)


def _mix(x: int) -> int:
    x &= _MASK64
    x = ((x ^ (x >> 30)) * _MIX_A) & _MASK64
    x = ((x ^ (x >> 27)) * _MIX_B) & _MASK64
    return x ^ (x >> 31)


def _mix_array(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64, copy=True)
    x ^= x >> np.uint64(30)
    x *= np.uint64(_MIX_A)
    x ^= x >> np.uint64(27)
    x *= np.uint64(_MIX_B)
    x ^= x >> np.uint64(31)
    return x


class Rng:
    """Deterministic stream of 64-bit words and derived uniform draws."""

    def __init__(self, seed: int):
        self._seed = int(seed) & _MASK64
        self._count = 0

    @property
    def seed(self) -> int:
        return self._seed

    def next_u64(self) -> int:
        self._count += 1
        return _mix(self._seed + self._count * _GOLDEN)

    def next_u64_array(self, n: int) -> np.ndarray:
        ks = np.arange(self._count + 1, self._count + n + 1, dtype=np.uint64)
        self._count += n
        words = np.uint64(self._seed) + ks * np.uint64(_GOLDEN)
        return _mix_array(words)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        u = (self.next_u64() >> 11) * _INV_2_53
        return lo + (hi - lo) * u

    def uniform_array(self, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        u = (self.next_u64_array(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        return lo + (hi - lo) * u

    def uniform_matrix(self, rows: int, cols: int, lo: float, hi: float) -> np.ndarray:
        return self.uniform_array(rows * cols, lo, hi).reshape(rows, cols)

    def randrange(self, n: int) -> int:
        """Integer in [0, n). Modulo reduction; bias is < n / 2**64."""
        if n <= 0:
            raise ValueError(f"randrange bound must be positive, got {n}")
        return self.next_u64() % n

    def spawn(self, stream: int) -> "Rng":
        """Independent child generator; stream ids give disjoint substreams."""
        return Rng(_mix(self._seed ^ _mix(stream + 0x5851F42D4C957F2D)))
