# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled bitstream kernels; mirrors ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

WORD = np.dtype("<u8")

cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil


cdef inline int _pop4(const uint64_t* w) noexcept nogil:
    return (__builtin_popcountll(w[0]) + __builtin_popcountll(w[1])
            + __builtin_popcountll(w[2]) + __builtin_popcountll(w[3]))


cdef inline void _rotl4(const uint64_t* src, uint64_t* dst, int r) noexcept nogil:
    cdef int q = (r >> 6) & 3
    cdef int s = r & 63
    cdef int j
    for j in range(4):
        if s == 0:
            dst[j] = src[(j - q + 4) & 3]
        else:
            dst[j] = (src[(j - q + 4) & 3] << s) | (src[(j - q + 3) & 3] >> (64 - s))


def popcount_rows(a):
    cdef const uint64_t[:, ::1] v = np.ascontiguousarray(a, dtype=WORD).reshape(-1, 4)
    cdef Py_ssize_t n = v.shape[0], i
    out = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = _pop4(&v[i, 0])
    return out


def rotl_rows(a, rotations):
    cdef const uint64_t[:, ::1] v = np.ascontiguousarray(a, dtype=WORD).reshape(-1, 4)
    cdef Py_ssize_t n = v.shape[0], i
    rot_arr = np.asarray(rotations, dtype=np.int64).reshape(-1) % 256
    if rot_arr.size == 1 and n != 1:
        rot_arr = np.full(n, rot_arr[0], dtype=np.int64)
    cdef const int64_t[::1] rot = np.ascontiguousarray(rot_arr)
    out = np.empty((n, 4), dtype=WORD)
    cdef uint64_t[:, ::1] o = out
    with nogil:
        for i in range(n):
            _rotl4(&v[i, 0], &o[i, 0], <int>rot[i])
    return out


def encode_rows(lut_rows, values, rotations):
    cdef const uint64_t[:, ::1] lut = np.ascontiguousarray(lut_rows, dtype=WORD)
    vals_arr = np.ascontiguousarray(np.asarray(values, dtype=np.int64).reshape(-1))
    cdef const int64_t[::1] vals = vals_arr
    cdef Py_ssize_t n = vals.shape[0], i
    rot_arr = np.ascontiguousarray(
        np.broadcast_to(np.asarray(rotations, dtype=np.int64), (n,)) % 256)
    cdef const int64_t[::1] rot = rot_arr
    out = np.empty((n, 4), dtype=WORD)
    cdef uint64_t[:, ::1] o = out
    for i in range(n):
        if vals[i] < 0 or vals[i] > 255:
            raise ValueError("operand out of 8-bit range")
    with nogil:
        for i in range(n):
            _rotl4(&lut[vals[i], 0], &o[i, 0], <int>rot[i])
    return out


def tree_reduce(leaves, sel, selc):
    cdef const uint64_t[:, ::1] lv = np.ascontiguousarray(leaves, dtype=WORD).reshape(-1, 4)
    cdef const uint64_t[:, ::1] s = np.ascontiguousarray(sel, dtype=WORD).reshape(-1, 4)
    cdef const uint64_t[:, ::1] sc = np.ascontiguousarray(selc, dtype=WORD).reshape(-1, 4)
    cdef Py_ssize_t n = lv.shape[0]
    cdef int k = (n - 1).bit_length() if n > 1 else 0
    if k > s.shape[0]:
        raise ValueError(f"tree depth {k} exceeds {s.shape[0]} select levels")
    work_arr = np.zeros(((1 << k), 4), dtype=WORD)
    work_arr[:n] = np.asarray(lv)
    cdef uint64_t[:, ::1] w = work_arr
    cdef Py_ssize_t width = 1 << k, q, j
    cdef int depth
    with nogil:
        for depth in range(k):
            width >>= 1
            for q in range(width):
                for j in range(4):
                    w[q, j] = (s[depth, j] & w[2 * q, j]) | (sc[depth, j] & w[2 * q + 1, j])
    return np.asarray(w[0]).copy(), k


def fold_reduce(leaves, sel, selc):
    cdef const uint64_t[:, ::1] lv = np.ascontiguousarray(leaves, dtype=WORD).reshape(-1, 4)
    cdef const uint64_t[:, ::1] s = np.ascontiguousarray(sel, dtype=WORD).reshape(-1, 4)
    cdef const uint64_t[:, ::1] sc = np.ascontiguousarray(selc, dtype=WORD).reshape(-1, 4)
    cdef Py_ssize_t n = lv.shape[0], t, j, lvl
    cdef Py_ssize_t nsel = s.shape[0]
    out = np.asarray(lv[0]).copy()
    cdef uint64_t[::1] acc = out
    with nogil:
        for t in range(1, n):
            lvl = (t - 1) % nsel
            for j in range(4):
                acc[j] = (s[lvl, j] & lv[t, j]) | (sc[lvl, j] & acc[j])
    return out


def and_popcount_matrix(a, b):
    cdef const uint64_t[:, ::1] x = np.ascontiguousarray(a, dtype=WORD).reshape(-1, 4)
    cdef const uint64_t[:, ::1] y = np.ascontiguousarray(b, dtype=WORD).reshape(-1, 4)
    cdef Py_ssize_t n = x.shape[0], m = y.shape[0], i, j
    out = np.empty((n, m), dtype=np.int64)
    cdef int64_t[:, ::1] o = out
    with nogil:
        for i in range(n):
            for j in range(m):
                o[i, j] = (__builtin_popcountll(x[i, 0] & y[j, 0])
                           + __builtin_popcountll(x[i, 1] & y[j, 1])
                           + __builtin_popcountll(x[i, 2] & y[j, 2])
                           + __builtin_popcountll(x[i, 3] & y[j, 3]))
    return out
