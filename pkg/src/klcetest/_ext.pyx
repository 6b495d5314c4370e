# cython: language_level=3
"""Compiled kernels for Gram matrices, the off-diagonal pair sum, and PAVA.

Every reduction runs in a fixed sequential order so results do not depend on
how callers split work across threads. Functions release the GIL.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


def rbf_gram(const double[:, ::1] X, double sigma):
    """Symmetric RBF Gram matrix; upper triangle computed once and mirrored."""
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, t
    cdef double diff, sq
    cdef double inv = 1.0 / (2.0 * sigma * sigma)
    out = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] G = out
    with nogil:
        for i in range(n):
            G[i, i] = 1.0
            for j in range(i + 1, n):
                sq = 0.0
                for t in range(d):
                    diff = X[i, t] - X[j, t]
                    sq = sq + diff * diff
                G[i, j] = exp(-sq * inv)
                G[j, i] = G[i, j]
    return out


def rbf_cross(const double[:, ::1] Q, const double[:, ::1] X, double sigma):
    """RBF kernel values between query rows and data rows, shape (m, n)."""
    cdef Py_ssize_t m = Q.shape[0], n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, t
    cdef double diff, sq
    cdef double inv = 1.0 / (2.0 * sigma * sigma)
    out = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] G = out
    with nogil:
        for i in range(m):
            for j in range(n):
                sq = 0.0
                for t in range(d):
                    diff = Q[i, t] - X[j, t]
                    sq = sq + diff * diff
                G[i, j] = exp(-sq * inv)
    return out


cdef inline double _offdiag_quadratic(const double* v, const double[:, ::1] M,
                                      Py_ssize_t n) noexcept nogil:
    # 2 * sum_{i<j} v_i M_ij v_j, with four interleaved accumulators per row.
    cdef Py_ssize_t i, j
    cdef double total = 0.0
    cdef double a0, a1, a2, a3
    cdef const double* row
    for i in range(n - 1):
        row = &M[i, 0]
        a0 = 0.0
        a1 = 0.0
        a2 = 0.0
        a3 = 0.0
        j = i + 1
        while j + 3 < n:
            a0 = a0 + row[j] * v[j]
            a1 = a1 + row[j + 1] * v[j + 1]
            a2 = a2 + row[j + 2] * v[j + 2]
            a3 = a3 + row[j + 3] * v[j + 3]
            j = j + 4
        while j < n:
            a0 = a0 + row[j] * v[j]
            j = j + 1
        total = total + v[i] * ((a0 + a1) + (a2 + a3))
    return 2.0 * total


def offdiag_quadratic(const double[::1] e, const double[:, ::1] M):
    """Sum over i != j of e_i * M_ij * e_j for symmetric M."""
    cdef Py_ssize_t n = e.shape[0]
    cdef double s
    if n < 2:
        return 0.0
    with nogil:
        s = _offdiag_quadratic(&e[0], M, n)
    return s


def pava(const double[::1] y, const double[::1] w):
    """Weighted pool-adjacent-violators fit for a nondecreasing sequence."""
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t i, k, top = -1
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] fit = out
    sums_a = np.empty(n, dtype=np.float64)
    wts_a = np.empty(n, dtype=np.float64)
    cnt_a = np.empty(n, dtype=np.int64)
    cdef double[::1] sums = sums_a
    cdef double[::1] wts = wts_a
    cdef cnp.int64_t[::1] cnt = cnt_a
    cdef Py_ssize_t pos
    cdef double value
    with nogil:
        for i in range(n):
            top = top + 1
            sums[top] = y[i] * w[i]
            wts[top] = w[i]
            cnt[top] = 1
            while top > 0 and sums[top - 1] / wts[top - 1] >= sums[top] / wts[top]:
                sums[top - 1] = sums[top - 1] + sums[top]
                wts[top - 1] = wts[top - 1] + wts[top]
                cnt[top - 1] = cnt[top - 1] + cnt[top]
                top = top - 1
        pos = 0
        for k in range(top + 1):
            value = sums[k] / wts[k]
            for i in range(cnt[k]):
                fit[pos] = value
                pos = pos + 1
    return out
