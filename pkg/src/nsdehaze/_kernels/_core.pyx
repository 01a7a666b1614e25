# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled 2-D kernels: truncated-window sliding minimum and box sum.

Same contracts as ``numpy_impl``; both filters are separable and run one
axis at a time in C loops.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


cdef void _min1d_rows(double[:, ::1] src, double[:, ::1] dst, int radius) noexcept nogil:
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    cdef Py_ssize_t i, j, k, lo, hi
    cdef double m
    for i in range(h):
        for j in range(w):
            lo = j - radius
            if lo < 0:
                lo = 0
            hi = j + radius
            if hi > w - 1:
                hi = w - 1
            m = src[i, lo]
            for k in range(lo + 1, hi + 1):
                if src[i, k] < m:
                    m = src[i, k]
            dst[i, j] = m


cdef void _sum1d_rows(double[:, ::1] src, double[:, ::1] dst, int radius) noexcept nogil:
    # Running-window update: O(w) per row regardless of radius.
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    cdef Py_ssize_t i, j, hi_add, lo_drop
    cdef double acc
    for i in range(h):
        acc = 0.0
        for j in range(radius if radius < w else w):
            acc += src[i, j]
        for j in range(w):
            hi_add = j + radius
            if hi_add < w:
                acc += src[i, hi_add]
            dst[i, j] = acc
            lo_drop = j - radius
            if lo_drop >= 0:
                acc -= src[i, lo_drop]


def min_filter2d(src, int radius):
    """Sliding minimum over a (2r+1)x(2r+1) window, truncated at borders."""
    cdef cnp.ndarray[double, ndim=2] a = np.ascontiguousarray(src, dtype=np.float64)
    if radius == 0:
        return a.copy()
    cdef cnp.ndarray[double, ndim=2] tmp = np.empty_like(a)
    cdef cnp.ndarray[double, ndim=2] tmp_t
    cdef cnp.ndarray[double, ndim=2] out_t
    _min1d_rows(a, tmp, radius)
    tmp_t = np.ascontiguousarray(tmp.T)
    out_t = np.empty_like(tmp_t)
    _min1d_rows(tmp_t, out_t, radius)
    return np.ascontiguousarray(out_t.T)


def box_sum2d(src, int radius):
    """Sum over a truncated (2r+1)x(2r+1) window at every position."""
    cdef cnp.ndarray[double, ndim=2] a = np.ascontiguousarray(src, dtype=np.float64)
    if radius == 0:
        return a.copy()
    cdef cnp.ndarray[double, ndim=2] tmp = np.empty_like(a)
    cdef cnp.ndarray[double, ndim=2] tmp_t
    cdef cnp.ndarray[double, ndim=2] out_t
    _sum1d_rows(a, tmp, radius)
    tmp_t = np.ascontiguousarray(tmp.T)
    out_t = np.empty_like(tmp_t)
    _sum1d_rows(tmp_t, out_t, radius)
    return np.ascontiguousarray(out_t.T)
