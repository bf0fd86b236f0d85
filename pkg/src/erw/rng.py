"""Counter-based random streams.

Every Monte-Carlo trial owns a Philox4x32-10 stream keyed by a 64-bit mix of
``(master_seed, trial)``.  A draw is a pure function of ``(key, counter)``, so a
trial produces the same numbers no matter which worker runs it or in what
order trials are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

MASK32 = 0xFFFFFFFF
MASK64 = 0xFFFFFFFFFFFFFFFF

_PHILOX_M0 = np.uint64(0xD2511F53)
_PHILOX_M1 = np.uint64(0xCD9E8D57)
_PHILOX_W0 = np.uint64(0x9E3779B9)
_PHILOX_W1 = np.uint64(0xBB67AE85)
_LO32 = np.uint64(MASK32)
_SH32 = np.uint64(32)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

_TWO_M53 = 1.0 / 9007199254740992.0


@nb.njit(cache=True, nogil=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox4x32 with 10 rounds; all arguments are uint64 holding 32-bit words."""
    for rnd in range(10):
        if rnd > 0:
            k0 = (k0 + _PHILOX_W0) & _LO32
            k1 = (k1 + _PHILOX_W1) & _LO32
        prod0 = _PHILOX_M0 * c0
        prod1 = _PHILOX_M1 * c2
        n0 = (prod1 >> _SH32) ^ c1 ^ k0
        n1 = prod1 & _LO32
        n2 = (prod0 >> _SH32) ^ c3 ^ k1
        n3 = prod0 & _LO32
        c0, c1, c2, c3 = n0, n1, n2, n3
    return c0, c1, c2, c3


@nb.njit(cache=True, nogil=True)
def mix64(z):
    z = z ^ (z >> np.uint64(30))
    z = z * _MIX1
    z = z ^ (z >> np.uint64(27))
    z = z * _MIX2
    return z ^ (z >> np.uint64(31))


@nb.njit(cache=True, nogil=True)
def trial_key(seed, trial):
    """Split the 64-bit stream key for ``(seed, trial)`` into two Philox key words."""
    key = mix64(mix64(np.uint64(seed) + _GOLDEN) ^ np.uint64(trial))
    return key & _LO32, key >> _SH32


@nb.njit(cache=True, nogil=True)
def uniform(k0, k1, ctr):
    """Uniform double in [0, 1) with 53 random bits, for draw number ``ctr``."""
    ctr = np.uint64(ctr)
    w0, w1, _, _ = philox4x32(ctr & _LO32, ctr >> _SH32, np.uint64(0), np.uint64(0), k0, k1)
    return float(w0 >> np.uint64(5)) * 67108864.0 * _TWO_M53 + float(w1 >> np.uint64(6)) * _TWO_M53


def stream_key(master_seed: int, trial: int) -> int:
    """64-bit key of trial ``trial`` under ``master_seed`` (same value the kernels use)."""
    k0, k1 = trial_key(np.uint64(master_seed & MASK64), np.uint64(trial & MASK64))
    return int(k0) | (int(k1) << 32)


@dataclass
class Stream:
    """A single counter-based stream: scalar draws for the Python-level samplers.

    The kernels consume the same ``(key, counter)`` sequence, so a trajectory drawn
    through a ``Stream`` and one drawn in bulk for the same trial agree exactly.
    """

    key: int
    counter: int = 0

    @classmethod
    def for_trial(cls, master_seed: int, trial: int = 0) -> Stream:
        return cls(stream_key(master_seed, trial))

    @property
    def key_words(self) -> tuple[np.uint64, np.uint64]:
        return np.uint64(self.key & MASK32), np.uint64(self.key >> 32)

    def random(self) -> float:
        k0, k1 = self.key_words
        u = uniform(k0, k1, np.uint64(self.counter))
        self.counter += 1
        return float(u)

    def below(self, n: int) -> int:
        """Uniform integer in ``[0, n)``."""
        return min(int(self.random() * n), n - 1)
