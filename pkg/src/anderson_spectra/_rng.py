"""Counter-based pseudorandom words for reproducible parallel sampling.

Every random draw in this package is a pure function of
(master_seed, stream, realization_index, site).  There is no generator
state, so workers can evaluate any subset of (realization, site) pairs
in any order and always produce the same values.
"""

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)  # golden-ratio increment
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

# stream lanes; any fixed distinct constants work
STREAM_VALUES = 0
STREAM_RESAMPLE = 101
STREAM_EXTRA_WORDS = 200  # base for multi-word draws (Cantor bits beyond 64)


def _mix64(x):
    """SplitMix64 finalizer on uint64 input (wrapping multiplies)."""
    with np.errstate(over="ignore"):
        x = (x ^ (x >> np.uint64(30))) * _M1
        x = (x ^ (x >> np.uint64(27))) * _M2
        return x ^ (x >> np.uint64(31))


def _as_u64(value):
    return np.uint64(int(value) & 0xFFFFFFFFFFFFFFFF)


def words(master_seed, stream, index, site):
    """Keyed 64-bit words, one per broadcast element of (index, site).

    index and site may be integers or integer arrays; the result follows
    numpy broadcasting.  Three mixing rounds separate the lanes.
    """
    with np.errstate(over="ignore"):
        seed = _as_u64(master_seed)
        key = _mix64(np.uint64(seed) + _GAMMA * (_as_u64(stream) + np.uint64(1)))
        idx = np.asarray(index, dtype=np.uint64)
        st = np.asarray(site, dtype=np.uint64)
        h = _mix64(key + _GAMMA * idx)
        return _mix64(h + _GAMMA * st)


def uniform01(master_seed, stream, index, site):
    """Uniform doubles in [0, 1), one per broadcast element."""
    w = words(master_seed, stream, index, site)
    return (w >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


def derive_seed(master_seed, tag):
    """Deterministic 63-bit sub-seed for a named purpose.

    Used to give independent experiments (bootstrap draws, oracle runs,
    inner resampling) their own streams off one master seed.
    """
    with np.errstate(over="ignore"):
        h = np.uint64(_as_u64(master_seed))
        for ch in str(tag).encode():
            h = _mix64(h + _GAMMA * np.uint64(ch + 1))
        return int(h & np.uint64(0x7FFFFFFFFFFFFFFF))
