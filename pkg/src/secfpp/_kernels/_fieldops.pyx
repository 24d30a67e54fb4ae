# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled modular arithmetic kernels.

Residues are uint64; products go through unsigned 128-bit intermediates,
so any odd prime modulus below 2**62 is exact.
"""

from libc.stdint cimport uint64_t

cdef extern from *:
    ctypedef unsigned long long uint128_t "unsigned __int128"


cdef inline uint64_t _mulmod(uint64_t a, uint64_t b, uint64_t q) nogil:
    return <uint64_t>((<uint128_t>a * b) % q)


def mulmod_vec(const uint64_t[::1] a, const uint64_t[::1] b, uint64_t q,
               uint64_t[::1] out):
    cdef Py_ssize_t i, n = a.shape[0]
    with nogil:
        for i in range(n):
            out[i] = _mulmod(a[i], b[i], q)


def mulmod_scalar(uint64_t s, const uint64_t[::1] b, uint64_t q,
                  uint64_t[::1] out):
    cdef Py_ssize_t i, n = b.shape[0]
    with nogil:
        for i in range(n):
            out[i] = _mulmod(s, b[i], q)


def matmul_mod(const uint64_t[:, ::1] a, const uint64_t[:, ::1] b,
               uint64_t q, uint64_t[:, ::1] out):
    cdef Py_ssize_t i, j, k
    cdef Py_ssize_t r = a.shape[0], inner = a.shape[1], c = b.shape[1]
    cdef uint128_t acc
    with nogil:
        for i in range(r):
            for j in range(c):
                acc = 0
                for k in range(inner):
                    acc += <uint128_t>a[i, k] * b[k, j] % q
                out[i, j] = <uint64_t>(acc % q)


def sq_diff_sum(const uint64_t[:, ::1] center_minus_scaled, uint64_t q,
                uint64_t[::1] out):
    """Row-wise sum of squares mod q: out[i] = sum_c x[i,c]^2 mod q."""
    cdef Py_ssize_t i, c
    cdef Py_ssize_t rows = center_minus_scaled.shape[0]
    cdef Py_ssize_t cols = center_minus_scaled.shape[1]
    cdef uint128_t acc
    cdef uint64_t v
    with nogil:
        for i in range(rows):
            acc = 0
            for c in range(cols):
                v = center_minus_scaled[i, c]
                acc += <uint128_t>v * v % q
            out[i] = <uint64_t>(acc % q)
