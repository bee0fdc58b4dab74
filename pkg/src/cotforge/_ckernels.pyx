# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: row softmax, masked token NLL, per-row KL, LCS."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()

cdef enum:
    IGNORE_INDEX = -100


cdef inline double _row_logsumexp(const double[:, ::1] z, Py_ssize_t r, double scale) noexcept nogil:
    cdef Py_ssize_t k, K = z.shape[1]
    cdef double m = z[r, 0] * scale
    cdef double acc = 0.0, v
    for k in range(1, K):
        v = z[r, k] * scale
        if v > m:
            m = v
    for k in range(K):
        acc += exp(z[r, k] * scale - m)
    return m + log(acc)


def log_softmax_rows(z):
    cdef const double[:, ::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef Py_ssize_t n = zv.shape[0], K = zv.shape[1], r, k
    out = np.empty((n, K), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef double lse
    with nogil:
        for r in range(n):
            lse = _row_logsumexp(zv, r, 1.0)
            for k in range(K):
                ov[r, k] = zv[r, k] - lse
    return out


def masked_nll(logits, targets):
    cdef const double[:, ::1] z = np.ascontiguousarray(logits, dtype=np.float64)
    cdef const cnp.int64_t[::1] t = np.ascontiguousarray(targets, dtype=np.int64)
    cdef Py_ssize_t n = z.shape[0], K = z.shape[1], r, k
    grad = np.zeros((n, K), dtype=np.float64)
    cdef double[:, ::1] g = grad
    cdef double loss = 0.0, lse
    cdef cnp.int64_t y
    with nogil:
        for r in range(n):
            y = t[r]
            if y == IGNORE_INDEX:
                continue
            lse = _row_logsumexp(z, r, 1.0)
            loss -= z[r, y] - lse
            for k in range(K):
                g[r, k] = exp(z[r, k] - lse)
            g[r, y] -= 1.0
    return float(loss), grad


def kl_rows(teacher_logits, student_logits, double tau, mask):
    cdef const double[:, ::1] a = np.ascontiguousarray(teacher_logits, dtype=np.float64)
    cdef const double[:, ::1] s = np.ascontiguousarray(student_logits, dtype=np.float64)
    cdef const cnp.uint8_t[::1] mk = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef Py_ssize_t n = a.shape[0], K = a.shape[1], r, k
    kl = np.zeros(n, dtype=np.float64)
    grad = np.zeros((n, K), dtype=np.float64)
    cdef double[::1] klv = kl
    cdef double[:, ::1] g = grad
    cdef double inv = 1.0 / tau
    cdef double lse_a, lse_s, lpa, lps, pa, acc
    with nogil:
        for r in range(n):
            if mk[r] == 0:
                continue
            lse_a = _row_logsumexp(a, r, inv)
            lse_s = _row_logsumexp(s, r, inv)
            acc = 0.0
            for k in range(K):
                lpa = a[r, k] * inv - lse_a
                lps = s[r, k] * inv - lse_s
                pa = exp(lpa)
                if pa > 0.0:
                    acc += pa * (lpa - lps)
                g[r, k] = (exp(lps) - pa) * inv
            klv[r] = acc
    return kl, grad


def lcs_length(a, b):
    cdef const cnp.int64_t[::1] x = np.ascontiguousarray(a, dtype=np.int64)
    cdef const cnp.int64_t[::1] y = np.ascontiguousarray(b, dtype=np.int64)
    cdef Py_ssize_t n = x.shape[0], m = y.shape[0], i, j
    if n == 0 or m == 0:
        return 0
    prev_arr = np.zeros(m + 1, dtype=np.int64)
    cur_arr = np.zeros(m + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] prev = prev_arr
    cdef cnp.int64_t[::1] cur = cur_arr
    cdef cnp.int64_t[::1] tmp
    with nogil:
        for i in range(n):
            cur[0] = 0
            for j in range(m):
                if x[i] == y[j]:
                    cur[j + 1] = prev[j] + 1
                elif cur[j] > prev[j + 1]:
                    cur[j + 1] = cur[j]
                else:
                    cur[j + 1] = prev[j + 1]
            tmp = prev
            prev = cur
            cur = tmp
    return int(prev[m])
