"""Counter-based random streams (Philox4x64-10) usable inside numba kernels.

Every random word is a pure function of ``(counter, key)``, so a Monte Carlo
path can address its own draws as ``(draw index, path index, stream id)``
without any shared generator state.  Results then do not depend on how paths
are scheduled across threads.  The block function matches
``numpy.random.Philox`` bit for bit (numpy increments its counter before
producing a block).
"""

from __future__ import annotations

import numba as nb
import numpy as np

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_TWO_M53 = 1.0 / 9007199254740992.0

# stream ids
JUMPS = 0
GAUSS = 1


@nb.njit(cache=True, inline="always")
def _mulhilo(a, b):
    lo = a * b
    a_lo = a & _MASK32
    a_hi = a >> _S32
    b_lo = b & _MASK32
    b_hi = b >> _S32
    p0 = a_lo * b_lo
    p1 = a_hi * b_lo
    p2 = a_lo * b_hi
    p3 = a_hi * b_hi
    mid = (p0 >> _S32) + (p1 & _MASK32) + (p2 & _MASK32)
    hi = p3 + (p1 >> _S32) + (p2 >> _S32) + (mid >> _S32)
    return hi, lo


@nb.njit(cache=True)
def philox_block(c0, c1, c2, c3, k0, k1):
    """Philox4x64-10 of counter (c0..c3) under key (k0, k1); returns 4 uint64."""
    for r in range(10):
        if r > 0:
            k0 = k0 + _W0
            k1 = k1 + _W1
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@nb.njit(cache=True, inline="always")
def to_unit(word):
    """Map a 64-bit word to the open interval (0, 1)."""
    return ((word >> _S11) + 0.5) * _TWO_M53


@nb.njit(cache=True)
def uniforms(draw, path, stream, key):
    """Four (0,1) uniforms addressed by (draw, path, stream) under ``key``."""
    w0, w1, w2, w3 = philox_block(
        np.uint64(draw), np.uint64(path), np.uint64(stream), np.uint64(0), np.uint64(key), np.uint64(0)
    )
    return to_unit(w0), to_unit(w1), to_unit(w2), to_unit(w3)


@nb.njit(cache=True)
def normals(draw, path, key):
    """Four standard normals (two Box-Muller pairs) from the Gaussian stream."""
    u0, u1, u2, u3 = uniforms(draw, path, GAUSS, key)
    r0 = np.sqrt(-2.0 * np.log(u0))
    r1 = np.sqrt(-2.0 * np.log(u2))
    t0 = 2.0 * np.pi * u1
    t1 = 2.0 * np.pi * u3
    return r0 * np.cos(t0), r0 * np.sin(t0), r1 * np.cos(t1), r1 * np.sin(t1)


def philox4x64(counter, key) -> np.ndarray:
    """Python entry point: the Philox4x64-10 block for one counter and key."""
    c = [np.uint64(v) for v in counter]
    k = [np.uint64(v) for v in key]
    return np.array(philox_block(c[0], c[1], c[2], c[3], k[0], k[1]), dtype=np.uint64)


def seed_key(seed: int) -> int:
    """Reduce an arbitrary nonnegative integer seed to a 64-bit Philox key word."""
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    return int(seed) & 0xFFFFFFFFFFFFFFFF
