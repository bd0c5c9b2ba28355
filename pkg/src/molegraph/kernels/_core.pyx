# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled segment/scatter kernels for the graph-convolution hot path.

Must match `_numpy_impl` bit-for-bit: per output row, candidates are
consumed in ascending flat order (sequential adds, first-wins max ties).
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def neighbor_sum(H, nbr_flat, offsets):
    H = np.ascontiguousarray(H, dtype=np.float64)
    cdef double[:, ::1] h = H
    cdef long long[::1] flat = np.ascontiguousarray(nbr_flat, dtype=np.int64)
    cdef long long[::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef Py_ssize_t n = off.shape[0] - 1
    cdef Py_ssize_t f = h.shape[1]
    out_arr = np.zeros((n, f), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, k, c
    cdef long long j
    with nogil:
        for i in range(n):
            for k in range(off[i], off[i + 1]):
                j = flat[k]
                for c in range(f):
                    out[i, c] += h[j, c]
    return out_arr


def closed_max(H, cnbr_flat, offsets):
    H = np.ascontiguousarray(H, dtype=np.float64)
    cdef double[:, ::1] h = H
    cdef long long[::1] flat = np.ascontiguousarray(cnbr_flat, dtype=np.int64)
    cdef long long[::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef Py_ssize_t n = off.shape[0] - 1
    cdef Py_ssize_t f = h.shape[1]
    out_arr = np.empty((n, f), dtype=np.float64)
    arg_arr = np.empty((n, f), dtype=np.int64)
    cdef double[:, ::1] out = out_arr
    cdef long long[:, ::1] arg = arg_arr
    cdef Py_ssize_t i, k, c
    cdef long long j
    cdef double v
    with nogil:
        for i in range(n):
            j = flat[off[i]]
            for c in range(f):
                out[i, c] = h[j, c]
                arg[i, c] = j
            for k in range(off[i] + 1, off[i + 1]):
                j = flat[k]
                for c in range(f):
                    v = h[j, c]
                    if v > out[i, c]:
                        out[i, c] = v
                        arg[i, c] = j
    return out_arr, arg_arr


def scatter_max_grad(grad, argwin, n_rows):
    grad = np.ascontiguousarray(grad, dtype=np.float64)
    cdef double[:, ::1] g = grad
    cdef long long[:, ::1] arg = np.ascontiguousarray(argwin, dtype=np.int64)
    cdef Py_ssize_t n = g.shape[0]
    cdef Py_ssize_t f = g.shape[1]
    out_arr = np.zeros((n_rows, f), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, c
    with nogil:
        for i in range(n):
            for c in range(f):
                out[arg[i, c], c] += g[i, c]
    return out_arr


def segment_sum(H, seg_offsets):
    H = np.ascontiguousarray(H, dtype=np.float64)
    cdef double[:, ::1] h = H
    cdef long long[::1] off = np.ascontiguousarray(seg_offsets, dtype=np.int64)
    cdef Py_ssize_t g_count = off.shape[0] - 1
    cdef Py_ssize_t f = h.shape[1]
    out_arr = np.zeros((g_count, f), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t g, i, c
    with nogil:
        for g in range(g_count):
            for i in range(off[g], off[g + 1]):
                for c in range(f):
                    out[g, c] += h[i, c]
    return out_arr
