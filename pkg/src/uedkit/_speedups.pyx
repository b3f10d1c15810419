# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled alignment-marginal recursions and edit distance.

Must stay numerically interchangeable with the pure-numpy fallbacks in
uedkit.kernels: same recursion, same log-sum association order, same
NEG_INF sentinel. The cross-backend tests assert agreement to 1e-12.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log1p

cnp.import_array()

cdef double NEG_INF = -1.0e30
# the double nearest ln 2, matching the constant the numpy ufunc uses
cdef double LOGE2 = 0.6931471805599453


cdef inline double _logaddexp(double x, double y) noexcept nogil:
    cdef double z
    if x == y:
        return x + LOGE2
    z = x - y
    if z > 0:
        return x + log1p(exp(-z))
    elif z <= 0:
        return y + log1p(exp(z))
    return x + y


cdef cnp.int64_t[::1] _interleave(cnp.int64_t[::1] targets, int blank):
    cdef Py_ssize_t L = targets.shape[0]
    cdef cnp.int64_t[::1] labels = np.full(2 * L + 1, blank, dtype=np.int64)
    cdef Py_ssize_t i
    for i in range(L):
        labels[2 * i + 1] = targets[i]
    return labels


def ctc_forward_backward(double[:, ::1] log_probs, cnp.int64_t[::1] targets, int blank):
    """Loss and per-frame symbol posteriors; mirrors the numpy fallback."""
    cdef Py_ssize_t T = log_probs.shape[0]
    cdef cnp.int64_t[::1] labels = _interleave(targets, blank)
    cdef Py_ssize_t S = labels.shape[0]
    cdef Py_ssize_t t, s

    cdef double[:, ::1] emit = np.empty((T, S))
    for t in range(T):
        for s in range(S):
            emit[t, s] = log_probs[t, labels[s]]

    cdef unsigned char[::1] skip_ok = np.zeros(S, dtype=np.uint8)
    for s in range(3, S, 2):
        skip_ok[s] = labels[s] != labels[s - 2]

    cdef double[:, ::1] alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if S > 1:
        alpha[0, 1] = emit[0, 1]
    cdef double acc, v
    for t in range(1, T):
        for s in range(S):
            acc = _logaddexp(alpha[t - 1, s],
                             alpha[t - 1, s - 1] if s >= 1 else NEG_INF)
            if skip_ok[s]:
                acc = _logaddexp(acc, alpha[t - 1, s - 2])
            v = acc + emit[t, s]
            alpha[t, s] = v if v > NEG_INF else NEG_INF

    cdef double log_z
    if S > 1:
        log_z = _logaddexp(alpha[T - 1, S - 1], alpha[T - 1, S - 2])
    else:
        log_z = alpha[T - 1, 0]
    cdef double loss = -log_z

    cdef double[:, ::1] beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = 0.0
    if S > 1:
        beta[T - 1, S - 2] = 0.0
    cdef double[::1] nxt = np.empty(S)
    for t in range(T - 2, -1, -1):
        for s in range(S):
            nxt[s] = beta[t + 1, s] + emit[t + 1, s]
        for s in range(S):
            acc = _logaddexp(nxt[s], nxt[s + 1] if s + 1 < S else NEG_INF)
            if s + 2 < S and skip_ok[s + 2]:
                acc = _logaddexp(acc, nxt[s + 2])
            beta[t, s] = acc if acc > NEG_INF else NEG_INF

    gamma_np = np.zeros((T, log_probs.shape[1]))
    cdef double[:, ::1] gamma = gamma_np
    cdef double post
    for t in range(T):
        for s in range(S):
            v = alpha[t, s] + beta[t, s] + loss
            post = exp(v if v < 0.0 else 0.0)
            gamma[t, labels[s]] += post
    return float(loss), gamma_np


def ctc_forward(double[:, ::1] log_probs, cnp.int64_t[::1] targets, int blank):
    """Forward-only loss; mirrors the numpy fallback."""
    cdef Py_ssize_t T = log_probs.shape[0]
    cdef cnp.int64_t[::1] labels = _interleave(targets, blank)
    cdef Py_ssize_t S = labels.shape[0]
    cdef Py_ssize_t t, s

    cdef double[:, ::1] emit = np.empty((T, S))
    for t in range(T):
        for s in range(S):
            emit[t, s] = log_probs[t, labels[s]]

    cdef unsigned char[::1] skip_ok = np.zeros(S, dtype=np.uint8)
    for s in range(3, S, 2):
        skip_ok[s] = labels[s] != labels[s - 2]

    cdef double[::1] prev = np.full(S, NEG_INF)
    cdef double[::1] cur = np.empty(S)
    prev[0] = emit[0, 0]
    if S > 1:
        prev[1] = emit[0, 1]
    cdef double acc, v
    for t in range(1, T):
        for s in range(S):
            acc = _logaddexp(prev[s], prev[s - 1] if s >= 1 else NEG_INF)
            if skip_ok[s]:
                acc = _logaddexp(acc, prev[s - 2])
            v = acc + emit[t, s]
            cur[s] = v if v > NEG_INF else NEG_INF
        prev[:] = cur

    if S > 1:
        return float(-_logaddexp(prev[S - 1], prev[S - 2]))
    return float(-prev[0])


def levenshtein(cnp.int64_t[::1] a, cnp.int64_t[::1] b):
    """Classic two-row edit distance over integer sequences."""
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    if n == 0:
        return int(m)
    if m == 0:
        return int(n)
    cdef cnp.int64_t[::1] prev = np.arange(m + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] row = np.empty(m + 1, dtype=np.int64)
    cdef Py_ssize_t i, j
    cdef cnp.int64_t best, sub, dele, ins
    for i in range(1, n + 1):
        row[0] = i
        for j in range(1, m + 1):
            sub = prev[j - 1] + (0 if b[j - 1] == a[i - 1] else 1)
            dele = prev[j] + 1
            ins = row[j - 1] + 1
            best = sub
            if dele < best:
                best = dele
            if ins < best:
                best = ins
            row[j] = best
        prev[:] = row
    return int(prev[m])
