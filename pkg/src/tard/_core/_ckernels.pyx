# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: sliding-window minimum, multi-bandwidth RBF Gram
matrices and the Mann-Whitney AUC."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


def window_min(s, Py_ssize_t window):
    cdef const double[::1] v = np.ascontiguousarray(s, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t n_out = n - window + 1
    out_arr = np.empty(n_out, dtype=np.float64)
    cdef double[::1] out = out_arr
    # monotone deque of indices, values increasing from head to tail
    cdef Py_ssize_t[::1] dq = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t head = 0, tail = 0, i
    for i in range(n):
        while tail > head and v[dq[tail - 1]] >= v[i]:
            tail -= 1
        dq[tail] = i
        tail += 1
        if dq[head] <= i - window:
            head += 1
        if i >= window - 1:
            out[i - window + 1] = v[dq[head]]
    return out_arr


def rbf_gram(x, y, gammas):
    cdef const double[:, ::1] a = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] b = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[::1] g = np.ascontiguousarray(gammas, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], d = a.shape[1], nb = g.shape[0]
    k_arr = np.empty((n, m), dtype=np.float64)
    w_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] k = k_arr
    cdef double[:, ::1] w = w_arr
    cdef Py_ssize_t i, j, c, q
    cdef double d2, diff, e, ks, ws
    for i in range(n):
        for j in range(m):
            d2 = 0.0
            for c in range(d):
                diff = a[i, c] - b[j, c]
                d2 += diff * diff
            ks = 0.0
            ws = 0.0
            for q in range(nb):
                e = exp(-g[q] * d2)
                ks += e
                ws += g[q] * e
            k[i, j] = ks / nb
            w[i, j] = ws / nb
    return k_arr, w_arr


def rank_auc(scores, truth):
    s = np.asarray(scores, dtype=np.float64)
    order = np.argsort(s, kind="mergesort")
    cdef const double[::1] srt = np.ascontiguousarray(s[order])
    cdef const unsigned char[::1] pos = np.ascontiguousarray(np.asarray(truth).astype(bool)[order]).view(np.uint8)
    cdef Py_ssize_t n = srt.shape[0], i = 0, j, t
    cdef double rank_sum = 0.0, mid
    cdef Py_ssize_t n_pos = 0, run_pos
    while i < n:
        j = i
        run_pos = 0
        while j < n and srt[j] == srt[i]:
            run_pos += pos[j]
            j += 1
        mid = (i + 1 + j) / 2.0
        rank_sum += mid * run_pos
        n_pos += run_pos
        i = j
    cdef Py_ssize_t n_neg = n - n_pos
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (<double>n_pos * n_neg)
