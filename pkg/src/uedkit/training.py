"""Robust quantizer training via alignment-free pseudo-labeling.

A frozen teacher labels clean audio once; the student MLP then learns to
reproduce those deduplicated unit strings from augmented renderings of the
same utterances, optimized with the alignment marginal loss from `ctc`.
Iterative mode re-labels with the previous round's best student.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .audio import Signal, derive_rng, derive_seed
from .augment import AugmentationSet, sample_augmentation
from .ctc import ctc_grad, ctc_loss, min_frames
from .errors import TrainingError, ValidationError
from .quantizer import (
    MlpQuantizer,
    dedup,
    mlp_forward, mlp_forward_cached,
    quantize,
    quantizer_fingerprint,
    round_to_f32,
    LEAKY_SLOPE,
)

log = logging.getLogger(__name__)

GRAD_CLIP_NORM = 5.0
PARAM_KEYS = ("w1", "b1", "w2", "b2", "w3", "b3")


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for one training run; the seed pins every random choice."""

    learning_rate: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 40
    patience: int = 5
    val_fraction: float = 0.1
    seed: int = 0
    aug_set: AugmentationSet | None = None

    def __post_init__(self):
        if not (self.learning_rate > 0.0):
            raise ValidationError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ValidationError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 1:
            raise ValidationError(f"patience must be >= 1, got {self.patience}")
        if not (0.0 <= self.val_fraction < 1.0):
            raise ValidationError(f"val_fraction must be in [0, 1), got {self.val_fraction}")


def _params_of(q: MlpQuantizer) -> dict:
    return {k: getattr(q, k).copy() for k in PARAM_KEYS}


@dataclass
class AdamState:
    """First/second moment accumulators plus the shared step counter."""

    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def create(cls, params: dict) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(params: dict, grads: dict, state: AdamState, lr: float) -> dict:
    """One bias-corrected Adam update; returns the new parameters.

    The state is advanced in place. Non-finite gradients abort the run
    rather than silently poisoning the moments.
    """
    for key in params:
        g = grads[key]
        if not np.all(np.isfinite(g)):
            raise TrainingError(
                f"non-finite gradient in {key} at step {state.step + 1}"
            )
    state.step += 1
    t = state.step
    out = {}
    for key in params:
        g = grads[key]
        state.m[key] = state.beta1 * state.m[key] + (1.0 - state.beta1) * g
        state.v[key] = state.beta2 * state.v[key] + (1.0 - state.beta2) * g * g
        m_hat = state.m[key] / (1.0 - state.beta1 ** t)
        v_hat = state.v[key] / (1.0 - state.beta2 ** t)
        out[key] = params[key] - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return out


def clip_global_norm(grads: dict, max_norm: float) -> tuple[dict, float]:
    """Scale all gradients jointly so their concatenated L2 norm is at most
    max_norm. Returns (possibly rescaled grads, pre-clip norm)."""
    total = 0.0
    for g in grads.values():
        total += float((g * g).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


def mlp_backward_from_cache(q: MlpQuantizer, cache, logit_grads: np.ndarray) -> dict:
    """Exact reverse-mode gradients for all six MLP parameters given the
    forward cache and dL/dlogits. The feature extractor sits outside the
    trainable graph, so no gradient with respect to the input is formed."""
    X, z1, a1, z2, a2 = cache
    G = np.asarray(logit_grads, dtype=np.float64)
    if G.shape != (X.shape[0], q.K + 1):
        raise ValidationError(
            f"logit_grads shape {G.shape} != ({X.shape[0]}, {q.K + 1})"
        )
    g_w3 = G.T @ a2
    g_b3 = G.sum(axis=0)
    da2 = G @ q.w3
    dz2 = da2 * np.where(z2 > 0.0, 1.0, LEAKY_SLOPE)
    g_w2 = dz2.T @ a1
    g_b2 = dz2.sum(axis=0)
    da1 = dz2 @ q.w2
    dz1 = da1 * np.where(z1 > 0.0, 1.0, LEAKY_SLOPE)
    g_w1 = dz1.T @ X
    g_b1 = dz1.sum(axis=0)
    return {"w1": g_w1, "b1": g_b1, "w2": g_w2, "b2": g_b2, "w3": g_w3, "b3": g_b3}


def mlp_backward(q: MlpQuantizer, frames, logit_grads: np.ndarray) -> dict:
    """Parameter gradients for dL/dlogits on the given frames."""
    _, cache = mlp_forward_cached(q, frames)
    return mlp_backward_from_cache(q, cache, logit_grads)


@dataclass
class TrainLog:
    """Per-epoch records plus one summary per training round."""

    entries: list = field(default_factory=list)
    rounds: list = field(default_factory=list)
    seed: int = 0

    def comparable(self) -> dict:
        """Everything except wall-clock timings, for determinism checks."""
        entries = [
            {k: v for k, v in e.items() if k != "wall_clock_s"}
            for e in self.entries
        ]
        return {"entries": entries, "rounds": self.rounds, "seed": self.seed}


def write_train_log(path, train_log: TrainLog) -> None:
    """One JSON record per epoch, in training order."""
    with open(path, "w", encoding="utf-8") as fh:
        for entry in train_log.entries:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")


def read_train_log(path) -> list:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def _as_items(dataset) -> list:
    items = []
    for i, entry in enumerate(dataset):
        if isinstance(entry, Signal):
            items.append((str(i), entry))
        else:
            sid, sig = entry
            items.append((str(sid), sig))
    if not items:
        raise ValidationError("dataset is empty")
    return items


def _split(items: list, cfg: TrainConfig) -> tuple[list, list]:
    n = len(items)
    perm = derive_rng(cfg.seed, "split").permutation(n)
    n_val = int(round(n * cfg.val_fraction))
    if cfg.val_fraction > 0.0 and n >= 2:
        n_val = min(max(n_val, 1), n - 1)
    else:
        n_val = 0
    val = [items[i] for i in perm[:n_val]]
    train = [items[i] for i in perm[n_val:]]
    if not val:
        # too little data to hold anything out; validate on the train set
        val = list(train)
    return train, val


def _teacher_targets(teacher, encoder, items: list) -> tuple[list, int]:
    """Deduplicated teacher units from clean audio, one array per sample.
    Samples too short to produce a frame are dropped."""
    kept, dropped = [], 0
    for sid, sig in items:
        feats = encoder.encode(sig)
        if feats.frames.shape[0] == 0:
            dropped += 1
            log.warning("sample %s yields no frames; dropped from training", sid)
            continue
        units = dedup(quantize(teacher, feats)).units
        kept.append((sid, sig, units))
    if not kept:
        raise ValidationError("no sample in the dataset produces any frames")
    return kept, dropped


def _train_one_round(teacher, encoder, items, aug_set, cfg: TrainConfig,
                     round_idx: int) -> tuple[MlpQuantizer, list, dict]:
    teacher_id = quantizer_fingerprint(teacher)
    train_items, val_items = _split(items, cfg)
    train_set, _ = _teacher_targets(teacher, encoder, train_items)
    val_set, _ = _teacher_targets(teacher, encoder, val_items)

    # fixed validation transforms: one draw per sample per round, so the
    # early-stopping signal is not re-randomized every epoch
    val_cache = []
    val_infeasible = 0
    for sid, sig, target in val_set:
        g = sample_augmentation(aug_set, derive_rng(cfg.seed, "val-aug", sid))
        feats = encoder.encode(g.apply(sig))
        if feats.frames.shape[0] < min_frames(target):
            val_infeasible += 1
            continue
        val_cache.append((feats.frames, target))
    if not val_cache:
        raise TrainingError("validation set has no feasible sample")

    probe_sid, probe_sig, _ = train_set[0]
    probe_ref = encoder.encode(probe_sig).frames.copy()

    model = MlpQuantizer.initialize(encoder.dim, teacher.K,
                                    derive_rng(cfg.seed, "init"))
    params = _params_of(model)
    adam = AdamState.create(params)

    def val_loss_of(m: MlpQuantizer) -> float:
        losses = [ctc_loss(mlp_forward(m, fr), tg) for fr, tg in val_cache]
        return float(sum(losses) / len(losses))

    best_val = float("inf")
    best_params = None
    best_epoch = 0
    since_best = 0
    entries = []
    n_train = len(train_set)

    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        if not np.array_equal(encoder.encode(probe_sig).frames, probe_ref):
            raise TrainingError(
                f"feature extractor drifted on probe sample {probe_sid}"
            )
        order = derive_rng(cfg.seed, "order", epoch).permutation(n_train)
        epoch_losses = []
        infeasible = 0
        skipped_batches = 0
        for start in range(0, n_train, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            grad_sum = {k: np.zeros_like(p) for k, p in params.items()}
            batch_losses = []
            for idx in batch:
                sid, sig, target = train_set[idx]
                g = sample_augmentation(
                    aug_set, derive_rng(cfg.seed, "aug", epoch, sid))
                feats = encoder.encode(g.apply(sig))
                if feats.frames.shape[0] < min_frames(target):
                    infeasible += 1
                    continue
                logits, cache = mlp_forward_cached(model, feats.frames)
                loss, g_logits = ctc_grad(logits, target)
                p_grads = mlp_backward_from_cache(model, cache, g_logits)
                for k in PARAM_KEYS:
                    grad_sum[k] += p_grads[k]
                batch_losses.append(loss)
            if not batch_losses:
                skipped_batches += 1
                log.warning("epoch %d: batch at %d entirely infeasible, skipped",
                            epoch, start)
                continue
            grads = {k: v / len(batch_losses) for k, v in grad_sum.items()}
            grads, _ = clip_global_norm(grads, GRAD_CLIP_NORM)
            params = adam_step(params, grads, adam, cfg.learning_rate)
            model = MlpQuantizer(**params)
            epoch_losses.extend(batch_losses)
        if infeasible > 0.5 * n_train:
            raise TrainingError(
                f"epoch {epoch}: {infeasible}/{n_train} samples infeasible; "
                "augmentations shrink inputs below their target lengths"
            )
        if not epoch_losses:
            raise TrainingError(f"epoch {epoch}: no trainable sample")
        train_loss = float(sum(epoch_losses) / len(epoch_losses))
        val_loss = val_loss_of(model)
        if val_loss < best_val:
            best_val = val_loss
            best_params = {k: p.copy() for k, p in params.items()}
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
        entries.append({
            "round": round_idx,
            "epoch": epoch,
            "train_loss": train_loss,
            "val_loss": val_loss,
            "train_infeasible": infeasible,
            "val_infeasible": val_infeasible,
            "skipped_batches": skipped_batches,
            "seed": cfg.seed,
            "teacher": teacher_id,
            "wall_clock_s": time.perf_counter() - t0,
        })
        if since_best >= cfg.patience:
            break

    student = round_to_f32(MlpQuantizer(**best_params))
    summary = {
        "round": round_idx,
        "seed": cfg.seed,
        "teacher": teacher_id,
        "student": quantizer_fingerprint(student),
        "best_epoch": best_epoch,
        "best_val_loss": best_val,
        "epochs_run": len(entries),
    }
    return student, entries, summary


def _resolve_aug_set(aug_set, cfg: TrainConfig) -> AugmentationSet:
    chosen = aug_set if aug_set is not None else cfg.aug_set
    if chosen is None:
        raise ValidationError("no augmentation set given (argument or config)")
    if not isinstance(chosen, AugmentationSet):
        chosen = AugmentationSet(tuple(chosen))
    return chosen


def train_robust(teacher, encoder, dataset, aug_set=None,
                 config: TrainConfig | None = None) -> tuple[MlpQuantizer, TrainLog]:
    """Train one student against a frozen teacher.

    Teacher unit strings come from clean audio, deduplicated, computed once
    per sample. Each epoch re-draws one concrete augmentation per training
    sample and fits the student on the augmented features under the
    alignment marginal loss. Returns the best-validation checkpoint with
    parameters snapped to their file precision, plus the training log.
    """
    cfg = config or TrainConfig()
    pool = _resolve_aug_set(aug_set, cfg)
    items = _as_items(dataset)
    student, entries, summary = _train_one_round(
        teacher, encoder, items, pool, cfg, round_idx=1)
    return student, TrainLog(entries=entries, rounds=[summary], seed=cfg.seed)


def train_iterative(teacher, encoder, dataset, aug_set=None,
                    config: TrainConfig | None = None,
                    rounds: int = 1) -> tuple[list, TrainLog]:
    """Chained pseudo-labeling: round r trains against the round r-1 student.

    Round 1 reproduces train_robust exactly. Returns every round's best
    checkpoint, oldest first, plus the merged log.
    """
    cfg = config or TrainConfig()
    if rounds < 1:
        raise ValidationError(f"rounds must be >= 1, got {rounds}")
    pool = _resolve_aug_set(aug_set, cfg)
    items = _as_items(dataset)
    students = []
    train_log = TrainLog(seed=cfg.seed)
    current = teacher
    for r in range(1, rounds + 1):
        seed_r = cfg.seed if r == 1 else derive_seed(cfg.seed, "round", r)
        cfg_r = dataclasses.replace(cfg, seed=seed_r)
        student, entries, summary = _train_one_round(
            current, encoder, items, pool, cfg_r, round_idx=r)
        train_log.entries.extend(entries)
        train_log.rounds.append(summary)
        students.append(student)
        current = student
    return students, train_log
