"""Pure-numpy modular arithmetic kernels.

Fallback backend used when the compiled extension is unavailable.  All
values are residues stored as ``uint64``; the modulus ``q`` must be below
2**62 so that sums of two residues never wrap.

Products of two residues can exceed 64 bits (q ~ 1e10 and above), so
multiplication decomposes one operand into 13-bit limbs: every intermediate
stays below 2**64 as long as q < 2**51.  Larger moduli take a slow exact
path through Python integers.
"""

import numpy as np

BACKEND_NAME = "python"

_LIMB_BITS = 13
_LIMB_MASK = np.uint64((1 << _LIMB_BITS) - 1)
_CHUNK_LIMIT = 1 << 51


def _as_u64(a):
    return np.asarray(a, dtype=np.uint64)


def mulmod(a, b, q):
    """Elementwise (a * b) % q with numpy broadcasting."""
    a = _as_u64(a)
    b = _as_u64(b)
    if q < _CHUNK_LIMIT:
        return _mulmod_chunked(a, b, q)
    af = a.astype(object)
    bf = b.astype(object)
    return np.asarray((af * bf) % q, dtype=np.uint64)


def _mulmod_chunked(a, b, q):
    # a = sum of 13-bit limbs; (acc*2^13 + limb)*b folded in mod q per limb.
    qq = np.uint64(q)
    shift = np.uint64(_LIMB_BITS)
    a, b = np.broadcast_arrays(a, b)
    acc = np.zeros(a.shape, dtype=np.uint64)
    for pos in (39, 26, 13, 0):
        acc = (acc << shift) % qq
        limb = (a >> np.uint64(pos)) & _LIMB_MASK
        acc = (acc + limb * b % qq) % qq
    return acc


def addmod(a, b, q):
    """Elementwise (a + b) % q."""
    return (_as_u64(a) + _as_u64(b)) % np.uint64(q)


def submod(a, b, q):
    """Elementwise (a - b) % q, kept in [0, q)."""
    qq = np.uint64(q)
    return (_as_u64(a) + (qq - _as_u64(b))) % qq


def negmod(a, q):
    """Elementwise (-a) % q."""
    qq = np.uint64(q)
    return (qq - _as_u64(a)) % qq


def summod(a, axis, q):
    """Sum along an axis mod q, chunking so partial sums never wrap."""
    a = _as_u64(a)
    qq = np.uint64(q)
    length = a.shape[axis]
    step = max(1, (1 << 63) // max(q, 1) - 1)
    if length <= step:
        return a.sum(axis=axis, dtype=np.uint64) % qq
    parts = [
        chunk.sum(axis=axis, dtype=np.uint64) % qq
        for chunk in np.array_split(a, range(step, length, step), axis=axis)
    ]
    acc = parts[0]
    for p in parts[1:]:
        acc = (acc + p) % qq
    return acc


def matmul_mod(a, b, q):
    """Modular matrix product (r x k) @ (k x c) -> (r x c) mod q."""
    a = _as_u64(a)
    b = _as_u64(b)
    k = a.shape[1]
    if k == 0:
        return np.zeros((a.shape[0], b.shape[1]), dtype=np.uint64)
    if q * q * k < (1 << 63):
        return (a @ b) % np.uint64(q)
    if q < (1 << 52) and k <= 1023:
        return _matmul_limb(a, b, q)
    acc = np.zeros((a.shape[0], b.shape[1]), dtype=np.uint64)
    for j in range(k):
        acc = addmod(acc, mulmod(a[:, j : j + 1], b[j : j + 1, :], q), q)
    return acc


def _matmul_limb(a, b, q):
    # Split both operands into 26-bit limbs; each partial product matrix
    # entry is below k * 2**52 <= 2**62 for k <= 1023.
    qq = np.uint64(q)
    half = np.uint64(26)
    mask = np.uint64((1 << 26) - 1)
    a_hi, a_lo = a >> half, a & mask
    b_hi, b_lo = b >> half, b & mask
    p_hi = (a_hi @ b_hi) % qq
    p_mid = ((a_hi @ b_lo) % qq + (a_lo @ b_hi) % qq) % qq
    p_lo = (a_lo @ b_lo) % qq
    c52 = np.uint64(pow(2, 52, q))
    c26 = np.uint64(pow(2, 26, q))
    out = mulmod(p_hi, c52, q)
    out = (out + mulmod(p_mid, c26, q)) % qq
    return (out + p_lo) % qq
