# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: counter-based uniforms and per-device selection."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t, uint8_t

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t M1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t M2 = 0x94D049BB133111EBULL


cdef inline uint64_t _mix(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * M1
    z = (z ^ (z >> 27)) * M2
    return z ^ (z >> 31)


def uniforms(key, ids):
    cdef int64_t[::1] idv = np.ascontiguousarray(ids, dtype=np.int64)
    cdef Py_ssize_t n = idv.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef uint64_t k = <uint64_t>key
    with nogil:
        for i in range(n):
            o[i] = <double>(_mix(k + (<uint64_t>idv[i] + 1) * GOLDEN) >> 11) * (1.0 / 9007199254740992.0)
    return out


def select_rows(offsets, row_vocab, row_weight, u, active):
    cdef int64_t[::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef int64_t[::1] voc = np.ascontiguousarray(row_vocab, dtype=np.int64)
    cdef int64_t[::1] w = np.ascontiguousarray(row_weight, dtype=np.int64)
    cdef double[::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef uint8_t[::1] act = np.ascontiguousarray(active, dtype=np.uint8)
    cdef Py_ssize_t n = off.shape[0] - 1, i, j
    out = np.full(n, -1, dtype=np.int64)
    cdef int64_t[::1] o = out
    cdef int64_t total, target, acc
    with nogil:
        for i in range(n):
            if not act[i]:
                continue
            total = 0
            for j in range(off[i], off[i + 1]):
                total += w[j]
            if total <= 0:
                continue
            target = <int64_t>(uu[i] * <double>total)
            acc = 0
            for j in range(off[i], off[i + 1]):
                acc += w[j]
                if acc > target:
                    o[i] = voc[j]
                    break
    return out
