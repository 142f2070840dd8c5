# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled dense kernels for the attack/encoder inner loops.

Same contracts as ``grail.kernels._impl_np``; these versions fuse the
elementwise passes so no n-by-n temporaries are allocated.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()


def normalize_adjacency_forward(object W_in):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] W = \
        np.ascontiguousarray(W_in, dtype=np.float64)
    cdef Py_ssize_t n = W.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] N = np.empty((n, n))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s = np.empty(n)
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(n):
        acc = 1.0
        for j in range(n):
            acc += W[i, j]
        s[i] = 1.0 / sqrt(acc)
    for i in range(n):
        for j in range(n):
            if i == j:
                N[i, j] = (W[i, j] + 1.0) * (s[i] * s[j])
            else:
                N[i, j] = W[i, j] * (s[i] * s[j])
    return N, s


def normalize_adjacency_vjp(object grad_in, object W_in, object s_in):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] G = \
        np.ascontiguousarray(grad_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] W = \
        np.ascontiguousarray(W_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s = \
        np.ascontiguousarray(s_in, dtype=np.float64)
    cdef Py_ssize_t n = W.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, n))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] row_dot = np.zeros(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] col_dot = np.zeros(n)
    cdef Py_ssize_t i, j
    cdef double m, t
    # row_dot[i] = sum_j G[i,j] * M[i,j] * s[j]; col_dot the transpose view.
    for i in range(n):
        for j in range(n):
            m = W[i, j] + (1.0 if i == j else 0.0)
            row_dot[i] += G[i, j] * m * s[j]
            col_dot[j] += G[i, j] * m * s[i]
    for i in range(n):
        t = -0.5 * s[i] * s[i] * s[i] * (row_dot[i] + col_dot[i])
        for j in range(n):
            out[i, j] = G[i, j] * (s[i] * s[j]) + t
    return out


def assemble_relaxed(object A_in, object rows_in, object cols_in, object p_in):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] A = \
        np.ascontiguousarray(A_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] rows = \
        np.ascontiguousarray(rows_in, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] cols = \
        np.ascontiguousarray(cols_in, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] p = \
        np.ascontiguousarray(p_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] W = A.copy()
    cdef Py_ssize_t e, r, c
    cdef double delta
    for e in range(rows.shape[0]):
        r = rows[e]
        c = cols[e]
        delta = (1.0 - 2.0 * A[r, c]) * p[e]
        W[r, c] += delta
        W[c, r] += delta
    return W


def pair_flip_grads(object grad_in, object A_in, object rows_in, object cols_in):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] G = \
        np.ascontiguousarray(grad_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] A = \
        np.ascontiguousarray(A_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] rows = \
        np.ascontiguousarray(rows_in, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] cols = \
        np.ascontiguousarray(cols_in, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(rows.shape[0])
    cdef Py_ssize_t e, r, c
    for e in range(rows.shape[0]):
        r = rows[e]
        c = cols[e]
        out[e] = (1.0 - 2.0 * A[r, c]) * (G[r, c] + G[c, r])
    return out


cdef double _clip_sum(double[::1] p, double mu) nogil:
    cdef double total = 0.0
    cdef double v
    cdef Py_ssize_t e
    for e in range(p.shape[0]):
        v = p[e] - mu
        if v > 1.0:
            v = 1.0
        elif v < 0.0:
            v = 0.0
        total += v
    return total


def project_budget(object p_in, double delta, double tol=1e-7):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] p = \
        np.ascontiguousarray(p_in, dtype=np.float64)
    cdef Py_ssize_t size = p.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(size)
    cdef double[::1] pv = p
    cdef Py_ssize_t e, it
    cdef double lo, hi, mu, gap, v
    if delta <= 0.0:
        out[:] = 0.0
        return out
    if _clip_sum(pv, 0.0) <= delta:
        for e in range(size):
            v = p[e]
            out[e] = 1.0 if v > 1.0 else (0.0 if v < 0.0 else v)
        return out
    lo = p[0]
    hi = p[0]
    for e in range(size):
        if p[e] < lo:
            lo = p[e]
        if p[e] > hi:
            hi = p[e]
    lo -= 1.0
    mu = lo
    for it in range(200):
        mu = 0.5 * (lo + hi)
        gap = _clip_sum(pv, mu) - delta
        if fabs(gap) <= tol:
            break
        if gap > 0.0:
            lo = mu
        else:
            hi = mu
        if hi - lo <= 1e-15:
            break
    for e in range(size):
        v = p[e] - mu
        out[e] = 1.0 if v > 1.0 else (0.0 if v < 0.0 else v)
    return out
