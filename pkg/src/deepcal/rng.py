"""Counter-based uniform random numbers.

Every draw is a pure function of ``(seed, stream, counter)``: a SplitMix64
finalizer applied to ``stream_key + counter * GAMMA``, where ``stream_key``
is itself the SplitMix64 hash of the seed and stream index.  Any block of
draws can therefore be computed independently, in any order, by any number
of workers, and always comes out bit-identical.

Sub-seeds are derived with :func:`derive_seed`, which folds a text label and
integer indices into a parent seed with the same mixer.  This is the single
seed-splitting rule used throughout the package.
"""
import zlib

import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_MASK64 = (1 << 64) - 1


def mix64(x):
    """SplitMix64 finalizer on a uint64 array (wrapping arithmetic)."""
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = (x ^ (x >> _S30)) * _M1
        x = (x ^ (x >> _S27)) * _M2
    return x ^ (x >> _S31)


def _mix64_int(x: int) -> int:
    x &= _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(seed: int, label: str = "", *indices: int) -> int:
    """Deterministic child seed for ``(seed, label, *indices)``."""
    h = _mix64_int(int(seed) + 0x9E3779B97F4A7C15)
    h = _mix64_int(h ^ zlib.crc32(label.encode()))
    for i in indices:
        h = _mix64_int(h + (int(i) + 1) * 0x9E3779B97F4A7C15)
    return h


def stream_keys(seed, streams):
    """Per-stream 64-bit keys.

    ``seed`` may be an integer or a uint64 array broadcastable against
    ``streams`` (one seed per row when generating batches).
    """
    seed = np.asarray(seed, dtype=np.uint64)
    streams = np.asarray(streams, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(mix64(seed + GAMMA) + (streams + np.uint64(1)) * GAMMA)


def uniforms_at(keys, counter: int):
    """Uniforms in (0, 1) for one counter value across an array of keys."""
    with np.errstate(over="ignore"):
        z = mix64(keys + np.uint64(counter + 1) * GAMMA)
    # 53 random bits centred in their cell: never exactly 0 or 1
    return ((z >> _S11).astype(np.float64) + 0.5) * 2.0**-53


def uniforms(seed: int, n: int, stream: int = 0, start: int = 0):
    """``n`` consecutive uniforms of one stream, beginning at ``start``."""
    key = stream_keys(seed, stream)
    counters = np.arange(start, start + n, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = mix64(key + (counters + np.uint64(1)) * GAMMA)
    return ((z >> _S11).astype(np.float64) + 0.5) * 2.0**-53
