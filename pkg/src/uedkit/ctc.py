"""Alignment-marginal (CTC) loss over blank-interleaved targets.

Loss and analytic gradient run on the kernel backend; a literal
path-enumeration version is kept alongside as a test oracle. The blank
symbol always sits at the last logit column (index K for K units).
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from . import kernels
from .errors import ValidationError, InfeasibleTargetError

BRUTE_FORCE_LIMIT = 10**6


def _validate(logits: np.ndarray, targets) -> tuple[np.ndarray, np.ndarray, int]:
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2:
        raise ValidationError(f"logits must be (T, K+1), got shape {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise ValidationError("logits must be finite")
    targets = np.asarray(targets, dtype=np.int64)
    if targets.ndim != 1:
        raise ValidationError("target must be a 1-D unit sequence")
    n_units = logits.shape[1] - 1
    if n_units < 1:
        raise ValidationError("logits need at least one unit column plus blank")
    if len(targets) and (targets.min() < 0 or targets.max() >= n_units):
        raise ValidationError(f"target units must lie in [0, {n_units})")
    return logits, targets, n_units


def min_frames(targets) -> int:
    """Fewest frames that can emit the target: one per label plus a forced
    blank between adjacent repeats."""
    targets = np.asarray(targets, dtype=np.int64)
    repeats = int(np.sum(targets[1:] == targets[:-1])) if len(targets) > 1 else 0
    return len(targets) + repeats


def _check_feasible(n_frames: int, targets: np.ndarray) -> None:
    need = min_frames(targets)
    if n_frames < need:
        raise InfeasibleTargetError(
            f"target of length {len(targets)} needs >= {need} frames, got {n_frames}"
        )


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def ctc_loss(logits, targets) -> float:
    """Negative log-probability that the per-frame distributions emit any
    alignment collapsing to `targets`.

    `logits` are raw scores (T, K+1); rows are log-softmaxed internally.
    Raises InfeasibleTargetError when the target cannot fit in T frames.
    """
    logits, targets, n_units = _validate(logits, targets)
    _check_feasible(logits.shape[0], targets)
    return kernels.ctc_forward(log_softmax(logits), targets, n_units)


def ctc_grad(logits, targets) -> tuple[float, np.ndarray]:
    """Loss and its exact gradient with respect to the raw logits.

    grad[t, k] = softmax(logits)[t, k] - gamma[t, k], where gamma sums the
    state posteriors carrying symbol k at frame t.
    """
    logits, targets, n_units = _validate(logits, targets)
    _check_feasible(logits.shape[0], targets)
    logp = log_softmax(logits)
    loss, gamma = kernels.ctc_forward_backward(logp, targets, n_units)
    return loss, np.exp(logp) - gamma


def collapse_path(path, blank: int) -> list:
    """Collapse an alignment path: merge adjacent repeats, then drop blanks."""
    out = []
    prev = None
    for sym in path:
        if sym != prev:
            if sym != blank:
                out.append(sym)
            prev = sym
    return out


def ctc_brute_force(logits, targets) -> float:
    """Literal alignment-sum oracle: enumerate every (K+1)^T path, keep those
    collapsing to the target, and sum their probabilities.

    Only for tiny instances; raises ValidationError above BRUTE_FORCE_LIMIT
    paths.
    """
    logits, targets, n_units = _validate(logits, targets)
    T, V = logits.shape
    if V**T > BRUTE_FORCE_LIMIT:
        raise ValidationError(f"{V}^{T} paths exceed the brute-force limit")
    logp = log_softmax(logits)
    want = [int(u) for u in targets]
    total = 0.0
    for path in itertools.product(range(V), repeat=T):
        if collapse_path(path, n_units) == want:
            total += math.exp(sum(logp[t, sym] for t, sym in enumerate(path)))
    if total <= 0.0:
        return float("inf")
    return -math.log(total)
