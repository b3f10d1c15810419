"""Unit edit distance: how much a quantizer's dedup unit stream changes
when the waveform is perturbed but the content is not.

Per sample: edit_distance(dedup(units(clean)), dedup(units(augmented)))
divided by the clean sample's frame count. Dataset reports aggregate per
augmentation kind, scaled by 100.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .audio import Signal, derive_rng
from .augment import AugmentationSet, sample_augmentation
from .errors import ValidationError
from .kernels import levenshtein_kernel
from .quantizer import dedup, quantize

log = logging.getLogger(__name__)

# report row order: the four perturbation families as usually tabled,
# then anything else alphabetically
KIND_ORDER = ("time_stretch", "pitch_shift", "reverb", "noise", "identity")


def kind_sort_key(kind: str):
    try:
        return (0, KIND_ORDER.index(kind))
    except ValueError:
        return (1, kind)


def levenshtein(a, b) -> int:
    """Minimum number of insertions, deletions, and substitutions turning
    a into b."""
    return levenshtein_kernel(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64))


def _apply(transform, signal: Signal) -> Signal:
    if hasattr(transform, "apply"):
        return transform.apply(signal)
    return transform(signal)


def ued_sample(quantizer, encoder, transform, signal: Signal) -> float | None:
    """Edit distance between dedup unit streams of the clean and augmented
    signal, normalized by the clean frame count.

    Returns None (with a warning) when the signal is too short to produce
    any frames; callers drop such samples from aggregates.
    """
    n_frames = encoder.frame_count(len(signal))
    if n_frames == 0:
        log.warning("sample of %d samples yields zero frames; skipped", len(signal))
        return None
    clean = dedup(quantize(quantizer, encoder.encode(signal)).units)
    augmented = dedup(quantize(quantizer, encoder.encode(_apply(transform, signal))).units)
    return levenshtein_kernel(clean, augmented) / n_frames


@dataclass(frozen=True)
class UedReport:
    """Aggregated robustness evaluation; scores are ratios times 100."""

    per_kind: dict
    records: list
    K: int
    quantizer_id: str
    dataset_id: str
    seed: int
    trials_per_sample: int
    aggregate: str

    def kinds(self) -> list:
        return sorted(self.per_kind, key=kind_sort_key)

    def mean_of(self, kind: str) -> float:
        return self.per_kind[kind]["mean"]


def _aggregate_kind(ratios: list, mode: str) -> dict:
    vals = np.asarray(ratios, dtype=np.float64)
    n = len(vals)
    if mode == "sum":
        score = float(vals.sum()) * 100.0
    else:
        score = float(vals.mean()) * 100.0 if n else 0.0
    stderr = float(vals.std(ddof=1) / np.sqrt(n)) * 100.0 if n > 1 else 0.0
    return {"mean": score, "stderr": stderr, "count": n}


def ued_dataset(
    quantizer,
    encoder,
    aug_set,
    dataset,
    seed: int = 0,
    trials_per_sample: int = 1,
    aggregate: str = "mean",
    quantizer_id: str = "",
    dataset_id: str = "",
) -> UedReport:
    """Evaluate UED over a dataset of (id, Signal) pairs or plain Signals.

    Each (sample, trial) pair draws its own transform from aug_set using a
    seed derived from (seed, sample id, trial), so results are reproducible
    and order-independent. Aggregation is per augmentation kind.
    """
    if aggregate not in ("mean", "sum"):
        raise ValidationError(f"aggregate must be 'mean' or 'sum', got {aggregate!r}")
    if trials_per_sample < 1:
        raise ValidationError("trials_per_sample must be >= 1")
    samples = []
    for i, item in enumerate(dataset):
        if isinstance(item, Signal):
            samples.append((str(i), item))
        else:
            sid, sig = item
            samples.append((str(sid), sig))
    if not samples:
        raise ValidationError("dataset must be non-empty")
    if not isinstance(aug_set, AugmentationSet):
        aug_set = AugmentationSet(tuple(aug_set))

    records = []
    by_kind: dict = {}
    for sid, sig in samples:
        n_frames = encoder.frame_count(len(sig))
        clean = None
        if n_frames > 0:
            clean = dedup(quantize(quantizer, encoder.encode(sig)).units)
        for trial in range(trials_per_sample):
            rng = derive_rng(seed, "ued", sid, trial)
            transform = sample_augmentation(aug_set, rng)
            rec = {
                "sample": sid,
                "trial": trial,
                "augmentation": transform.describe(),
                "frames": n_frames,
            }
            if clean is None:
                log.warning("sample %s yields zero frames; skipped", sid)
                rec.update({"skipped": True})
                records.append(rec)
                continue
            augmented = dedup(
                quantize(quantizer, encoder.encode(_apply(transform, sig))).units
            )
            dist = levenshtein_kernel(clean, augmented)
            ratio = dist / n_frames
            rec.update(
                {
                    "skipped": False,
                    "clean_dedup_len": int(len(clean)),
                    "distance": int(dist),
                    "ratio": ratio,
                }
            )
            records.append(rec)
            by_kind.setdefault(transform.kind, []).append(ratio)

    per_kind = {kind: _aggregate_kind(vals, aggregate) for kind, vals in by_kind.items()}
    return UedReport(
        per_kind=per_kind,
        records=records,
        K=quantizer.K,
        quantizer_id=quantizer_id,
        dataset_id=dataset_id,
        seed=seed,
        trials_per_sample=trials_per_sample,
        aggregate=aggregate,
    )


def report_payload(report: UedReport) -> dict:
    return {
        "per_kind": report.per_kind,
        "records": report.records,
        "K": report.K,
        "quantizer_id": report.quantizer_id,
        "dataset_id": report.dataset_id,
        "seed": report.seed,
        "trials_per_sample": report.trials_per_sample,
        "aggregate": report.aggregate,
    }


def report_to_json(report: UedReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report_payload(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


def report_to_csv(report: UedReport, path) -> None:
    """One row per augmentation kind, ready to drop into a results table."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["augmentation", "count", "mean_ued_x100", "stderr_x100"])
        for kind in report.kinds():
            stats = report.per_kind[kind]
            writer.writerow(
                [kind, stats["count"], f"{stats['mean']:.6f}", f"{stats['stderr']:.6f}"]
            )
