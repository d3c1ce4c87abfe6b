# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled batched matmul kernels for the segment-correlation hot path.

Same contract as ``numpy_backend``: C-contiguous float64 inputs, 3-D with a
flat leading batch axis.
"""

import numpy as np

NAME = "cython"


def bmm_nt(double[:, :, ::1] a, double[:, :, ::1] b):
    """(B, m, p) x (B, n, p) -> (B, m, n), contracting the trailing axis."""
    cdef Py_ssize_t nb = a.shape[0], m = a.shape[1], p = a.shape[2]
    cdef Py_ssize_t n = b.shape[1]
    out = np.empty((nb, m, n), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    cdef Py_ssize_t ib, i, j, t
    cdef double acc
    with nogil:
        for ib in range(nb):
            for i in range(m):
                for j in range(n):
                    acc = 0.0
                    for t in range(p):
                        acc = acc + a[ib, i, t] * b[ib, j, t]
                    o[ib, i, j] = acc
    return out


def bmm_nn(double[:, :, ::1] a, double[:, :, ::1] b):
    """(B, m, n) x (B, n, p) -> (B, m, p)."""
    cdef Py_ssize_t nb = a.shape[0], m = a.shape[1], n = a.shape[2]
    cdef Py_ssize_t p = b.shape[2]
    out = np.zeros((nb, m, p), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    cdef Py_ssize_t ib, i, k, j
    cdef double aik
    with nogil:
        for ib in range(nb):
            for i in range(m):
                for k in range(n):
                    aik = a[ib, i, k]
                    for j in range(p):
                        o[ib, i, j] = o[ib, i, j] + aik * b[ib, k, j]
    return out
