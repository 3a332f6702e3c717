"""Counter-based deterministic random streams.

Every uniform draw is a pure function of (seed, stream, index, slot), so a
sample's randomness does not depend on how work is split across workers or
in which order samples are evaluated.  The generator is the splitmix64
output function applied to a keyed counter; it passes the usual avalanche
spot checks and is vectorizable with plain uint64 arithmetic.
"""
from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# stream ids used by the estimation and ODE layers; kept in one place so
# two call sites never collide on the same counter sequence
STREAM_BASE_X = 1
STREAM_FIBER_S = 2
STREAM_ORBIT_START = 3
STREAM_BOX_SAMPLE = 4
STREAM_REGION_SAMPLE = 5
STREAM_RECURRENCE = 6
STREAM_BASE_DEVIATION = 7
STREAM_EXPANSION_STARTS = 8
STREAM_DOUBLING_BITS = 9


def _fmix64(z: int) -> int:
    z &= _MASK
    z ^= z >> 30
    z = (z * _MIX1) & _MASK
    z ^= z >> 27
    z = (z * _MIX2) & _MASK
    z ^= z >> 31
    return z


def stream_key(seed: int, stream: int, slot: int = 0) -> int:
    """Derive the 64-bit key for one logical stream."""
    k = seed & _MASK
    for word in (stream, slot):
        k = _fmix64((k + _GOLDEN) ^ (word & _MASK))
    return k


def uniforms(seed: int, stream: int, indices: np.ndarray | int, slot: int = 0) -> np.ndarray:
    """Uniform [0,1) draws at the given sample indices.

    ``indices`` may be an integer n (meaning ``arange(n)``) or an arbitrary
    uint64-convertible array; draws at equal indices are always equal.
    """
    if np.isscalar(indices):
        idx = np.arange(int(indices), dtype=np.uint64)
    else:
        idx = np.asarray(indices, dtype=np.uint64)
    key = np.uint64(stream_key(seed, stream, slot))
    golden = np.uint64(_GOLDEN)
    one = np.uint64(1)
    with np.errstate(over="ignore"):
        z = key + golden * (idx + one)
        z ^= z >> np.uint64(30)
        z *= np.uint64(_MIX1)
        z ^= z >> np.uint64(27)
        z *= np.uint64(_MIX2)
        z ^= z >> np.uint64(31)
    return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53


def uniform_at(seed: int, stream: int, index: int, slot: int = 0) -> float:
    """Scalar counterpart of :func:`uniforms` for spot checks."""
    z = _fmix64((stream_key(seed, stream, slot) + _GOLDEN * (index + 1)) & _MASK)
    return (z >> 11) * 2.0**-53
