"""Command-line front end: corpora, training, evaluation, reports.

Verbs: gen-corpus, train-kmeans, train-robust, eval-ued, compare, augment,
encode. Every randomized command requires --seed and is fully reproducible
from it; JSON/CSV reports embed the seed, a hash of the effective config,
and the tool version, and contain no timing data, so re-runs are
byte-identical.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field

from . import __version__
from .audio import derive_rng, read_wav, write_wav
from .augment import AugmentationSet, AugmentationSpec, sample_augmentation
from .dataset import gen_synth_corpus, read_manifest
from .encoder import EncoderConfig, LogMelEncoder, write_features
from .errors import FormatError, UedkitError, ValidationError
from .quantizer import (
    kmeans_fit,
    load_quantizer,
    quantizer_fingerprint,
    save_quantizer,
)
from .robustness import (
    UedReport,
    kind_sort_key,
    report_payload,
    report_to_csv,
    ued_dataset,
)
from .training import TrainConfig, train_iterative, write_train_log

AUG_FLAGS = {
    "time": ("time_stretch",),
    "pitch": ("pitch_shift",),
    "reverb": ("reverb",),
    "noise": ("noise",),
    "all": ("time_stretch", "pitch_shift", "reverb", "noise"),
    "identity": ("identity",),
}

_TRAIN_KEYS = ("learning_rate", "batch_size", "max_epochs", "patience", "val_fraction")


@dataclass(frozen=True)
class ExperimentConfig:
    """Effective settings for one command run; hashable for provenance."""

    seed: int
    units: int = 50
    quantizer_kind: str = "kmeans"
    rounds: int = 1
    aug: str = "all"
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    n_train: int = 500
    n_dev: int = 100
    duration_range: tuple = (2.0, 6.0)
    trials_per_sample: int = 1
    aggregate: str = "mean"

    def __post_init__(self):
        if self.seed is None:
            raise ValidationError("a seed is required")
        if self.quantizer_kind not in ("kmeans", "mlp"):
            raise ValidationError(f"unknown quantizer kind {self.quantizer_kind!r}")
        if self.units < 2:
            raise ValidationError("trained quantizers need units >= 2")
        if self.rounds < 1:
            raise ValidationError("rounds must be >= 1")
        if self.aug not in AUG_FLAGS:
            raise ValidationError(
                f"--aug must be one of {sorted(AUG_FLAGS)}, got {self.aug!r}")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "units": self.units,
            "quantizer_kind": self.quantizer_kind,
            "rounds": self.rounds,
            "aug": self.aug,
            "encoder": dataclasses.asdict(self.encoder),
            "train": {k: getattr(self.train, k) for k in _TRAIN_KEYS},
            "n_train": self.n_train,
            "n_dev": self.n_dev,
            "duration_range": list(self.duration_range),
            "trials_per_sample": self.trials_per_sample,
            "aggregate": self.aggregate,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.blake2b(blob, digest_size=8).hexdigest()


def _load_config_file(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError("config file must hold a JSON object")
    allowed = {
        "seed", "units", "quantizer_kind", "rounds", "aug", "encoder", "train",
        "n_train", "n_dev", "duration_range", "trials_per_sample", "aggregate",
    }
    unknown = set(doc) - allowed
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    return doc


def build_config(args) -> ExperimentConfig:
    """Defaults, overridden by --config file contents, overridden by flags."""
    doc = _load_config_file(args.config) if getattr(args, "config", None) else {}
    doc = dict(doc)
    train_over = doc.pop("train", {})
    if not isinstance(train_over, dict) or set(train_over) - set(_TRAIN_KEYS):
        raise ValidationError(f"config 'train' section allows keys {_TRAIN_KEYS}")
    enc_over = doc.pop("encoder", {})
    if not isinstance(enc_over, dict):
        raise ValidationError("config 'encoder' section must be an object")
    if "duration_range" in doc:
        doc["duration_range"] = tuple(doc["duration_range"])

    for flag in ("seed", "units", "rounds", "aug"):
        value = getattr(args, flag, None)
        if value is not None:
            doc[flag] = value
    if "seed" not in doc:
        raise ValidationError("a seed is required (--seed or config file)")

    try:
        encoder = EncoderConfig(**enc_over)
        train = TrainConfig(**train_over)
    except TypeError as exc:
        raise ValidationError(f"bad config section: {exc}") from exc
    return ExperimentConfig(encoder=encoder, train=train, **doc)


def aug_set_for(flag: str) -> AugmentationSet:
    return AugmentationSet(tuple(AugmentationSpec(k) for k in AUG_FLAGS[flag]))


def _meta(cfg: ExperimentConfig) -> dict:
    return {
        "tool_version": __version__,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
    }


def _write_json(path, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _stem(path) -> str:
    return os.path.splitext(os.path.basename(path))[0]


def cmd_gen_corpus(cfg: ExperimentConfig, out_dir) -> int:
    manifest = gen_synth_corpus(
        out_dir, cfg.n_train, cfg.n_dev, cfg.duration_range, cfg.seed)
    _write_json(os.path.join(out_dir, "gen.json"), {
        **_meta(cfg),
        "dataset_id": manifest.dataset_id,
        "n_train": cfg.n_train,
        "n_dev": cfg.n_dev,
        "duration_range": list(cfg.duration_range),
    })
    print(f"wrote {len(manifest.entries)} utterances to {out_dir}")
    return 0


def cmd_train_kmeans(manifest_path, cfg: ExperimentConfig, out_dir) -> int:
    manifest = read_manifest(manifest_path)
    entries = manifest.split("train")
    if not entries:
        raise ValidationError("manifest has no train split")
    encoder = LogMelEncoder(cfg.encoder)
    feats = [encoder.encode(manifest.load_signal(e)) for e in entries]
    quantizer = kmeans_fit(feats, cfg.units, rng=derive_rng(cfg.seed, "kmeans"))

    os.makedirs(out_dir, exist_ok=True)
    qpath = os.path.join(out_dir, f"kmeans_K{cfg.units}.quant")
    save_quantizer(qpath, quantizer)
    _write_json(qpath + ".json", {
        **_meta(cfg),
        "quantizer_id": quantizer_fingerprint(quantizer),
        "kind": "kmeans",
        "K": quantizer.K,
        "D": quantizer.D,
        "dataset_id": manifest.dataset_id,
        "n_utterances": len(entries),
        "n_frames": int(sum(f.frames.shape[0] for f in feats)),
    })
    print(f"wrote {qpath}")
    return 0


def cmd_train_robust(manifest_path, teacher_path, cfg: ExperimentConfig, out_dir) -> int:
    manifest = read_manifest(manifest_path)
    entries = manifest.split("train")
    if not entries:
        raise ValidationError("manifest has no train split")
    teacher = load_quantizer(teacher_path)
    encoder = LogMelEncoder(cfg.encoder)
    dataset = [(e.id, manifest.load_signal(e)) for e in entries]
    train_cfg = dataclasses.replace(cfg.train, seed=cfg.seed)
    students, train_log = train_iterative(
        teacher, encoder, dataset, aug_set_for(cfg.aug), train_cfg,
        rounds=cfg.rounds)

    os.makedirs(out_dir, exist_ok=True)
    checkpoints = []
    for r, student in enumerate(students, start=1):
        name = f"student_round{r}.quant"
        save_quantizer(os.path.join(out_dir, name), student)
        checkpoints.append(name)
    write_train_log(os.path.join(out_dir, "train_log.jsonl"), train_log)
    _write_json(os.path.join(out_dir, "run.json"), {
        **_meta(cfg),
        "teacher_id": quantizer_fingerprint(teacher),
        "dataset_id": manifest.dataset_id,
        "aug": cfg.aug,
        "rounds": train_log.rounds,
        "checkpoints": checkpoints,
    })
    print(f"wrote {len(checkpoints)} checkpoint(s) to {out_dir}")
    return 0


def cmd_eval_ued(manifest_path, quantizer_path, cfg: ExperimentConfig, out_dir) -> int:
    manifest = read_manifest(manifest_path)
    quantizer = load_quantizer(quantizer_path)
    encoder = LogMelEncoder(cfg.encoder)
    entries = manifest.split("dev") or manifest.entries
    dataset = [(e.id, manifest.load_signal(e)) for e in entries]
    qid = quantizer_fingerprint(quantizer)

    # one pass per kind so every sample contributes to every column
    per_kind: dict = {}
    records: list = []
    for kind in AUG_FLAGS[cfg.aug]:
        sub = ued_dataset(
            quantizer, encoder, AugmentationSet((AugmentationSpec(kind),)),
            dataset, seed=cfg.seed, trials_per_sample=cfg.trials_per_sample,
            aggregate=cfg.aggregate, quantizer_id=qid,
            dataset_id=manifest.dataset_id)
        per_kind.update(sub.per_kind)
        records.extend(sub.records)
    report = UedReport(
        per_kind=per_kind, records=records, K=quantizer.K, quantizer_id=qid,
        dataset_id=manifest.dataset_id, seed=cfg.seed,
        trials_per_sample=cfg.trials_per_sample, aggregate=cfg.aggregate)

    os.makedirs(out_dir, exist_ok=True)
    _write_json(os.path.join(out_dir, "report.json"),
                {**report_payload(report), **_meta(cfg)})
    report_to_csv(report, os.path.join(out_dir, "report.csv"))
    for kind in report.kinds():
        stats = report.per_kind[kind]
        print(f"{kind:14s} mean {stats['mean']:8.3f}  stderr {stats['stderr']:.3f}")
    return 0


def _load_report(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"report is not valid JSON: {exc}") from exc
    for key in ("per_kind", "K", "aggregate"):
        if key not in doc:
            raise FormatError(f"report {path} missing {key!r}")
    return doc


def cmd_compare(a_path, b_path, out_path=None) -> int:
    a = _load_report(a_path)
    b = _load_report(b_path)
    if a["K"] != b["K"]:
        raise ValidationError(f"reports use different K: {a['K']} vs {b['K']}")
    if set(a["per_kind"]) != set(b["per_kind"]):
        raise ValidationError("reports cover different augmentation kinds")
    if a["aggregate"] != b["aggregate"]:
        raise ValidationError("reports use different aggregation modes")

    table = {}
    improved_all = True
    for kind in sorted(a["per_kind"], key=kind_sort_key):
        a_mean = a["per_kind"][kind]["mean"]
        b_mean = b["per_kind"][kind]["mean"]
        if a_mean != 0.0:
            rel = 100.0 * (a_mean - b_mean) / a_mean
        else:
            rel = 0.0 if b_mean == 0.0 else None
        improved = b_mean < a_mean
        improved_all = improved_all and improved
        table[kind] = {
            "a_mean": a_mean,
            "b_mean": b_mean,
            "relative_improvement_pct": rel,
            "improved": improved,
        }
        shown = "n/a" if rel is None else f"{rel:7.2f}%"
        print(f"{kind:14s} A {a_mean:8.3f}  B {b_mean:8.3f}  improvement {shown}")
    print("B improves on all kinds" if improved_all else "no improvement on all kinds")

    if out_path:
        _write_json(out_path, {
            "tool_version": __version__,
            "a": {"path": os.path.basename(str(a_path)),
                  "seed": a.get("seed"), "config_hash": a.get("config_hash"),
                  "quantizer_id": a.get("quantizer_id")},
            "b": {"path": os.path.basename(str(b_path)),
                  "seed": b.get("seed"), "config_hash": b.get("config_hash"),
                  "quantizer_id": b.get("quantizer_id")},
            "per_kind": table,
            "improved_on_all": improved_all,
        })
    return 0 if improved_all else 1


def cmd_augment(wav_path, cfg: ExperimentConfig, out_dir) -> int:
    signal = read_wav(wav_path)
    rng = derive_rng(cfg.seed, "augment", os.path.basename(str(wav_path)))
    transform = sample_augmentation(aug_set_for(cfg.aug), rng)
    out = transform.apply(signal)
    os.makedirs(out_dir, exist_ok=True)
    stem = _stem(wav_path)
    write_wav(out, os.path.join(out_dir, f"{stem}.aug.wav"))
    _write_json(os.path.join(out_dir, f"{stem}.aug.json"), {
        **_meta(cfg),
        "input": os.path.basename(str(wav_path)),
        "augmentation": transform.describe(),
        "n_samples_in": len(signal),
        "n_samples_out": len(out),
    })
    print(f"wrote {stem}.aug.wav ({transform.kind})")
    return 0


def cmd_encode(wav_path, cfg: ExperimentConfig, out_dir) -> int:
    signal = read_wav(wav_path)
    encoder = LogMelEncoder(cfg.encoder)
    feats = encoder.encode(signal)
    os.makedirs(out_dir, exist_ok=True)
    stem = _stem(wav_path)
    write_features(os.path.join(out_dir, f"{stem}.feat"), feats)
    _write_json(os.path.join(out_dir, f"{stem}.feat.json"), {
        "tool_version": __version__,
        "config_hash": cfg.config_hash(),
        "frames": int(feats.frames.shape[0]),
        "dim": int(feats.frames.shape[1]),
        "frame_rate": feats.frame_rate,
    })
    print(f"wrote {stem}.feat ({feats.frames.shape[0]} frames)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uedkit",
        description="Measure and improve the robustness of discrete speech units.")
    parser.add_argument("--version", action="version",
                        version=f"uedkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    aug_choices = sorted(AUG_FLAGS)

    p = sub.add_parser("gen-corpus", help="generate a synthetic corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--config", help="JSON config overriding defaults")

    p = sub.add_parser("train-kmeans", help="fit the baseline quantizer")
    p.add_argument("manifest")
    p.add_argument("--units", type=int, required=True, help="codebook size K")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config")

    p = sub.add_parser("train-robust", help="pseudo-label training")
    p.add_argument("manifest")
    p.add_argument("teacher", help="teacher quantizer file")
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--aug", choices=aug_choices, default=None)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config")

    p = sub.add_parser("eval-ued", help="robustness evaluation report")
    p.add_argument("manifest")
    p.add_argument("quantizer", help="quantizer file to evaluate")
    p.add_argument("--aug", choices=aug_choices, default=None)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config")

    p = sub.add_parser("compare", help="relative improvement of report B over A")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.add_argument("--out", default=None, help="optional JSON output path")

    p = sub.add_parser("augment", help="apply one sampled augmentation to a WAV")
    p.add_argument("wav")
    p.add_argument("--aug", choices=aug_choices, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config")

    p = sub.add_parser("encode", help="dump a feature file for a WAV")
    p.add_argument("wav")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config")
    return parser


def _dispatch(args) -> int:
    if args.command == "gen-corpus":
        return cmd_gen_corpus(build_config(args), args.out)
    if args.command == "train-kmeans":
        return cmd_train_kmeans(args.manifest, build_config(args), args.out)
    if args.command == "train-robust":
        return cmd_train_robust(args.manifest, args.teacher,
                                build_config(args), args.out)
    if args.command == "eval-ued":
        return cmd_eval_ued(args.manifest, args.quantizer,
                            build_config(args), args.out)
    if args.command == "compare":
        return cmd_compare(args.report_a, args.report_b, args.out)
    if args.command == "augment":
        return cmd_augment(args.wav, build_config(args), args.out)
    if args.command == "encode":
        args.seed = 0  # encoding is deterministic; no randomness to seed
        return cmd_encode(args.wav, build_config(args), args.out)
    raise ValidationError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except UedkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
