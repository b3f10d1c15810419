"""Hot numerical kernels with a compiled core and a pure-numpy fallback.

The alignment-marginal recursions (forward/backward over interleaved CTC
states) and the edit-distance dynamic program dominate training and
evaluation runtime. Both exist twice: in the optional Cython extension
``uedkit._speedups`` and here in vectorized numpy. The extension is chosen
at import time when present; set UEDKIT_PURE_PYTHON=1 to force the fallback
(used by the benchmark and the cross-checking tests).

Both paths implement the identical recursion in the identical association
order, in log space with a large negative sentinel instead of -inf.
"""

from __future__ import annotations

import os

import numpy as np

NEG_INF = -1.0e30


def _interleave(targets: np.ndarray, blank: int) -> np.ndarray:
    """Blank-interleaved state labels: (blank, y1, blank, y2, ..., blank)."""
    out = np.full(2 * len(targets) + 1, blank, dtype=np.int64)
    out[1::2] = targets
    return out


def ctc_forward_backward_py(log_probs: np.ndarray, targets: np.ndarray, blank: int):
    """Alignment-marginal negative log-likelihood and label posteriors.

    Returns (loss, gamma) where gamma[t, k] is the posterior probability that
    frame t is aligned to symbol k, summed over interleaved states carrying k.
    Assumes the (targets, T) pair is feasible; callers check that first.
    """
    T = log_probs.shape[0]
    labels = _interleave(targets, blank)
    S = len(labels)
    emit = log_probs[:, labels]  # (T, S)

    # skip transition s-2 -> s allowed only into a non-blank state whose
    # label differs from the state two back
    skip_ok = np.zeros(S, dtype=bool)
    if S > 2:
        skip_ok[3::2] = labels[3::2] != labels[1:-2:2]

    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if S > 1:
        alpha[0, 1] = emit[0, 1]
    shift1 = np.empty(S)
    shift2 = np.empty(S)
    for t in range(1, T):
        prev = alpha[t - 1]
        shift1[0] = NEG_INF
        shift1[1:] = prev[:-1]
        shift2[:2] = NEG_INF
        shift2[2:] = prev[:-2]
        acc = np.logaddexp(prev, shift1)
        acc = np.where(skip_ok, np.logaddexp(acc, shift2), acc)
        alpha[t] = np.maximum(acc + emit[t], NEG_INF)

    if S > 1:
        log_z = np.logaddexp(alpha[T - 1, S - 1], alpha[T - 1, S - 2])
    else:
        log_z = alpha[T - 1, 0]
    loss = -log_z

    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = 0.0
    if S > 1:
        beta[T - 1, S - 2] = 0.0
    skip_from = np.zeros(S, dtype=bool)
    skip_from[: max(S - 2, 0)] = skip_ok[2:]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1] + emit[t + 1]
        shift1[-1] = NEG_INF
        shift1[:-1] = nxt[1:]
        shift2[-2:] = NEG_INF
        shift2[:-2] = nxt[2:]
        acc = np.logaddexp(nxt, shift1)
        acc = np.where(skip_from, np.logaddexp(acc, shift2), acc)
        beta[t] = np.maximum(acc, NEG_INF)

    post = np.exp(np.minimum(alpha + beta + loss, 0.0))
    gamma = np.zeros_like(log_probs)
    rows = np.broadcast_to(np.arange(T)[:, None], (T, S))
    np.add.at(gamma, (rows, np.broadcast_to(labels, (T, S))), post)
    return float(loss), gamma


def ctc_forward_py(log_probs: np.ndarray, targets: np.ndarray, blank: int) -> float:
    """Forward-only negative log-likelihood (no posteriors)."""
    T = log_probs.shape[0]
    labels = _interleave(targets, blank)
    S = len(labels)
    emit = log_probs[:, labels]

    skip_ok = np.zeros(S, dtype=bool)
    if S > 2:
        skip_ok[3::2] = labels[3::2] != labels[1:-2:2]

    prev = np.full(S, NEG_INF)
    prev[0] = emit[0, 0]
    if S > 1:
        prev[1] = emit[0, 1]
    shift1 = np.empty(S)
    shift2 = np.empty(S)
    for t in range(1, T):
        shift1[0] = NEG_INF
        shift1[1:] = prev[:-1]
        shift2[:2] = NEG_INF
        shift2[2:] = prev[:-2]
        acc = np.logaddexp(prev, shift1)
        acc = np.where(skip_ok, np.logaddexp(acc, shift2), acc)
        prev = np.maximum(acc + emit[t], NEG_INF)

    if S > 1:
        return float(-np.logaddexp(prev[S - 1], prev[S - 2]))
    return float(-prev[0])


def levenshtein_py(a: np.ndarray, b: np.ndarray) -> int:
    """Edit distance via the row dynamic program, insertion fixed up with a
    prefix-minimum scan so rows stay vectorized."""
    n, m = len(a), len(b)
    if n == 0:
        return m
    if m == 0:
        return n
    cols = np.arange(m + 1, dtype=np.int64)
    prev = cols.copy()
    for i in range(1, n + 1):
        sub = prev[:-1] + (b != a[i - 1])
        dele = prev[1:] + 1
        row = np.empty(m + 1, dtype=np.int64)
        row[0] = i
        row[1:] = np.minimum(sub, dele)
        # insertion: row[j] = min(row[j], row[j-1] + 1), left to right
        prev = np.minimum.accumulate(row - cols) + cols
    return int(prev[m])


def _as_f64(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def _as_i64(x):
    return np.ascontiguousarray(x, dtype=np.int64)


try:  # pragma: no cover - exercised indirectly
    from . import _speedups as _native
except ImportError:  # pragma: no cover
    _native = None

_FORCE_PURE = os.environ.get("UEDKIT_PURE_PYTHON", "0") not in ("", "0")

if _native is not None and not _FORCE_PURE:
    BACKEND = "native"

    def ctc_forward_backward(log_probs, targets, blank):
        return _native.ctc_forward_backward(_as_f64(log_probs), _as_i64(targets), int(blank))

    def ctc_forward(log_probs, targets, blank):
        return _native.ctc_forward(_as_f64(log_probs), _as_i64(targets), int(blank))

    def levenshtein_kernel(a, b):
        return _native.levenshtein(_as_i64(a), _as_i64(b))

else:
    BACKEND = "pure"

    def ctc_forward_backward(log_probs, targets, blank):
        return ctc_forward_backward_py(_as_f64(log_probs), _as_i64(targets), int(blank))

    def ctc_forward(log_probs, targets, blank):
        return ctc_forward_py(_as_f64(log_probs), _as_i64(targets), int(blank))

    def levenshtein_kernel(a, b):
        return levenshtein_py(_as_i64(a), _as_i64(b))
