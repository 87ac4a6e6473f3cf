"""Counter-based random streams.

Every random number used by the particle integrators is a pure function of
an integer key: (seed, realization) -> stream key, then (stream key, step,
pair or event index, slot) -> 64 random bits.  Nothing is stateful, so a
realization reproduces bit-for-bit whatever order realizations, steps or
pairs are evaluated in.

The mixer is the SplitMix64 finalizer.
"""
import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLD = np.uint64(GOLDEN)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_S32 = np.uint64(32)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * np.pi


def mix64(z: int) -> int:
    """Pure-Python SplitMix64 finalizer (matches the jitted version)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, realization: int = 0) -> int:
    """64-bit key of stream (seed, realization)."""
    return mix64(mix64(seed + GOLDEN) + (realization + 1) * GOLDEN)


def stream_keys(seed: int, realizations) -> np.ndarray:
    return np.array([stream_key(seed, int(r)) for r in realizations], dtype=np.uint64)


def numpy_rng(seed: int, realization: int = 0) -> np.random.Generator:
    """Generator for the non-pairwise draws (initial data, bootstrap)."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, realization)))


@njit(cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def step_key(key, step):
    return _mix(key + np.uint64(step + 1) * _GOLD)


@njit(cache=True, inline="always")
def pair_key(skey, lo, hi):
    return _mix(skey ^ ((np.uint64(lo) << _S32) | np.uint64(hi)))


@njit(cache=True, inline="always")
def uniform(h, slot):
    """Uniform on (0, 1] from key ``h`` and integer slot."""
    u = _mix(h + np.uint64(slot + 1) * _GOLD)
    return (np.float64(u >> _S11) + 1.0) * _INV53


_MASK32 = np.uint64(0xFFFFFFFF)
_INV32 = 2.0 / 4294967296.0


@njit(cache=True, fastmath=True)
def fill_normals(h, out):
    """Fill ``out`` with standard normals derived from key ``h``.

    Marsaglia polar method; each 64-bit draw supplies both coordinates of a
    candidate point as 32-bit halves.
    """
    d = out.shape[0]
    k = 0
    slot = np.uint64(1)
    while k < d:
        u = _mix(h + slot * _GOLD)
        slot += _ONE
        x = np.float64(u >> _S32) * _INV32 - 1.0 + 0.5 * _INV32
        y = np.float64(u & _MASK32) * _INV32 - 1.0 + 0.5 * _INV32
        s = x * x + y * y
        if s >= 1.0:
            continue
        f = np.sqrt(-2.0 * np.log(s) / s)
        out[k] = x * f
        k += 1
        if k < d:
            out[k] = y * f
            k += 1


@njit(cache=True)
def _key_check(key, step, lo, hi, slot):
    return uniform(pair_key(step_key(key, step), lo, hi), slot)
