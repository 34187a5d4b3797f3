"""Counter-based Gaussian random numbers (Philox4x32-10 + Box-Muller).

Every normal variate is a pure function of
``(seed, replica, row, col, time_index, component)``, so any entry of the
virtual array can be regenerated independently of which other entries were
drawn, in what order, or by which worker.

Counter layout for one Philox call::

    counter = (col, row, replica, 2 * time_index + component // 2)
    key     = (seed & 0xffffffff, seed >> 32)

The four 32-bit outputs form two 53-bit uniforms, which Box-Muller turns
into the normals for components ``2h`` and ``2h + 1``.  With a single
component per entry the pair is split between neighbouring columns instead:
the counter's first word is ``col >> 1`` and ``col & 1`` picks the variate.
"""

import math

import numpy as np

from . import _backend

MASK32 = 0xFFFFFFFF
_M0 = 0xD2511F53
_M1 = 0xCD9E8D57
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_ROUNDS = 10
_TWO_PI = 2.0 * math.pi
_INV_2_53 = 1.0 / 9007199254740992.0


def split_seed(seed):
    """Return the two 32-bit Philox key words of a 64-bit seed."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    return seed & MASK32, seed >> 32


def _check_counter_ranges(replica, row0, nrows, col0, ncols, time0, ntimes, ncomp):
    if not 1 <= ncomp <= 4:
        raise ValueError("ncomp must be in 1..4")
    if min(replica, row0, nrows, col0, ncols, time0, ntimes) < 0:
        raise ValueError("counter coordinates must be non-negative")
    if replica > MASK32 or row0 + nrows > MASK32 + 1 or col0 + ncols > MASK32 + 1:
        raise ValueError("counter coordinates exceed 32 bits")
    if 2 * (time0 + ntimes) > MASK32:
        raise ValueError("too many time steps")


# --------------------------------------------------------------------------
# numpy path
# --------------------------------------------------------------------------


def philox4x32_numpy(c0, c1, c2, c3, k0, k1):
    """Vectorized Philox4x32-10 on uint64 arrays holding 32-bit words."""
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & np.uint64(MASK32) for c in (c0, c1, c2, c3))
    k0 = np.uint64(k0)
    k1 = np.uint64(k1)
    m0 = np.uint64(_M0)
    m1 = np.uint64(_M1)
    mask = np.uint64(MASK32)
    s32 = np.uint64(32)
    for _ in range(_ROUNDS):
        p0 = c0 * m0
        p1 = c2 * m1
        c0, c1, c2, c3 = (
            (p1 >> s32) ^ c1 ^ k0,
            p1 & mask,
            (p0 >> s32) ^ c3 ^ k1,
            p0 & mask,
        )
        k0 = (k0 + np.uint64(_W0)) & mask
        k1 = (k1 + np.uint64(_W1)) & mask
    return c0, c1, c2, c3


def _box_muller_numpy(w0, w1, w2, w3):
    u1 = ((w0 >> np.uint64(5)) * np.uint64(67108864) + (w1 >> np.uint64(6))).astype(np.float64) * _INV_2_53
    u2 = ((w2 >> np.uint64(5)) * np.uint64(67108864) + (w3 >> np.uint64(6))).astype(np.float64) * _INV_2_53
    radius = np.sqrt(-2.0 * np.log(1.0 - u1))
    angle = _TWO_PI * u2
    return radius * np.cos(angle), radius * np.sin(angle)


def _normal_block_numpy(k0, k1, replica, row0, nrows, col0, ncols, time0, ntimes, ncomp):
    out = np.empty((ntimes, ncomp, nrows, ncols))
    rows = np.arange(row0, row0 + nrows, dtype=np.uint64)[:, None]
    cols = np.arange(col0, col0 + ncols, dtype=np.uint64)[None, :]
    paired = ncomp == 1
    c0 = np.broadcast_to(cols >> np.uint64(1) if paired else cols, (nrows, ncols))
    c1 = np.broadcast_to(rows, (nrows, ncols))
    c2 = np.full((nrows, ncols), replica, dtype=np.uint64)
    for t in range(ntimes):
        for half in range((ncomp + 1) // 2):
            c3 = np.full((nrows, ncols), 2 * (time0 + t) + half, dtype=np.uint64)
            z0, z1 = _box_muller_numpy(*philox4x32_numpy(c0, c1, c2, c3, k0, k1))
            if paired:
                out[t, 0] = np.where((cols & np.uint64(1)).astype(bool), z1, z0)
                continue
            out[t, 2 * half] = z0
            if 2 * half + 1 < ncomp:
                out[t, 2 * half + 1] = z1
    return out


# --------------------------------------------------------------------------
# numba path
# --------------------------------------------------------------------------


@_backend.njit
def _philox4x32_scalar(c0, c1, c2, c3, k0, k1):
    mask = np.uint64(0xFFFFFFFF)
    m0 = np.uint64(0xD2511F53)
    m1 = np.uint64(0xCD9E8D57)
    w0 = np.uint64(0x9E3779B9)
    w1 = np.uint64(0xBB67AE85)
    s32 = np.uint64(32)
    for _ in range(10):
        p0 = c0 * m0
        p1 = c2 * m1
        n0 = (p1 >> s32) ^ c1 ^ k0
        n1 = p1 & mask
        n2 = (p0 >> s32) ^ c3 ^ k1
        n3 = p0 & mask
        c0 = n0
        c1 = n1
        c2 = n2
        c3 = n3
        k0 = (k0 + w0) & mask
        k1 = (k1 + w1) & mask
    return c0, c1, c2, c3


@_backend.njit
def _normal_block_numba(k0, k1, replica, row0, nrows, col0, ncols, time0, ntimes, ncomp):
    out = np.empty((ntimes, ncomp, nrows, ncols))
    k0 = np.uint64(k0)
    k1 = np.uint64(k1)
    rep = np.uint64(replica)
    s5 = np.uint64(5)
    s6 = np.uint64(6)
    scale = np.uint64(67108864)
    two_pi = 2.0 * np.pi
    inv = 1.0 / 9007199254740992.0
    nhalf = (ncomp + 1) // 2
    if ncomp == 1:
        one = np.uint64(1)
        for t in range(ntimes):
            step = np.uint64(2 * (time0 + t))
            for r in range(nrows):
                row = np.uint64(row0 + r)
                z0 = 0.0
                z1 = 0.0
                for c in range(ncols):
                    col = np.uint64(col0 + c)
                    if c == 0 or (col & one) == 0:
                        w0, w1, w2, w3 = _philox4x32_scalar(col >> one, row, rep, step, k0, k1)
                        u1 = np.float64((w0 >> s5) * scale + (w1 >> s6)) * inv
                        u2 = np.float64((w2 >> s5) * scale + (w3 >> s6)) * inv
                        radius = np.sqrt(-2.0 * np.log(1.0 - u1))
                        angle = two_pi * u2
                        z0 = radius * np.cos(angle)
                        z1 = radius * np.sin(angle)
                    out[t, 0, r, c] = z1 if (col & one) else z0
        return out
    for t in range(ntimes):
        for half in range(nhalf):
            step = np.uint64(2 * (time0 + t) + half)
            for r in range(nrows):
                row = np.uint64(row0 + r)
                for c in range(ncols):
                    w0, w1, w2, w3 = _philox4x32_scalar(np.uint64(col0 + c), row, rep, step, k0, k1)
                    u1 = np.float64((w0 >> s5) * scale + (w1 >> s6)) * inv
                    u2 = np.float64((w2 >> s5) * scale + (w3 >> s6)) * inv
                    radius = np.sqrt(-2.0 * np.log(1.0 - u1))
                    angle = two_pi * u2
                    out[t, 2 * half, r, c] = radius * np.cos(angle)
                    if 2 * half + 1 < ncomp:
                        out[t, 2 * half + 1, r, c] = radius * np.sin(angle)
    return out


def philox4x32(c0, c1, c2, c3, k0, k1):
    """Single Philox4x32-10 block; returns four Python ints."""
    words = philox4x32_numpy([c0], [c1], [c2], [c3], k0, k1)
    return tuple(int(w[0]) for w in words)


def normal_block(seed, replica, row0, nrows, col0, ncols, ntimes, ncomp, time0=0, backend=None):
    """I.i.d. standard normals for a rectangular block of the virtual array.

    Returns an array of shape ``(ntimes, ncomp, nrows, ncols)`` whose entry
    ``[t, c, r, k]`` depends only on
    ``(seed, replica, row0 + r, col0 + k, time0 + t, c)``.
    ``backend`` forces ``"numba"`` or ``"numpy"``; default follows the env flag.
    """
    _check_counter_ranges(replica, row0, nrows, col0, ncols, time0, ntimes, ncomp)
    k0, k1 = split_seed(seed)
    if backend is None:
        backend = _backend.backend_name()
    if backend == "numba":
        if not _backend.HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is not installed")
        return _normal_block_numba(k0, k1, replica, row0, nrows, col0, ncols, time0, ntimes, ncomp)
    if backend == "numpy":
        return _normal_block_numpy(k0, k1, replica, row0, nrows, col0, ncols, time0, ntimes, ncomp)
    raise ValueError(f"unknown backend {backend!r}")
