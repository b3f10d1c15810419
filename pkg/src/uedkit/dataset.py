"""Dataset manifests and the synthetic evaluation corpus.

The manifest is a relocatable JSON file: audio paths are stored relative
to its location, entries carry train/dev split tags, and ids are unique.
The synthetic generator builds speech-shaped utterances (harmonic source
through a two-formant resonator, segmental structure with cross-fades) so
the full pipeline can run at desk scale without external data.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .audio import CANONICAL_RATE, Signal, derive_rng, read_wav, write_wav
from .errors import FormatError, ValidationError

MANIFEST_VERSION = 1

SEGMENT_RANGE_S = (0.08, 0.30)
SEGMENTS_RANGE = (5, 20)
CROSSFADE_S = 0.01
_MAX_PLAN_TRIES = 1000


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    path: str  # relative to the manifest file
    split: str

    def __post_init__(self):
        if self.split not in ("train", "dev"):
            raise ValidationError(f"split must be train or dev, got {self.split!r}")


@dataclass
class DatasetManifest:
    dataset_id: str
    entries: list
    base_dir: str = "."

    def __post_init__(self):
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValidationError("manifest ids must be unique")

    def split(self, tag: str) -> list:
        return [e for e in self.entries if e.split == tag]

    def audio_path(self, entry: ManifestEntry) -> str:
        return os.path.join(self.base_dir, entry.path)

    def load_signal(self, entry: ManifestEntry) -> Signal:
        return read_wav(self.audio_path(entry))


def write_manifest(path, manifest: DatasetManifest) -> None:
    doc = {
        "version": MANIFEST_VERSION,
        "dataset_id": manifest.dataset_id,
        "entries": [
            {"id": e.id, "path": e.path, "split": e.split}
            for e in manifest.entries
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> DatasetManifest:
    """Load a manifest and verify every referenced audio file exists."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise FormatError(f"cannot read manifest: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "entries" not in doc or "dataset_id" not in doc:
        raise FormatError("manifest missing dataset_id or entries")
    if doc.get("version") != MANIFEST_VERSION:
        raise FormatError(f"unsupported manifest version {doc.get('version')}")
    base_dir = os.path.dirname(os.path.abspath(path))
    entries = [
        ManifestEntry(id=e["id"], path=e["path"], split=e["split"])
        for e in doc["entries"]
    ]
    manifest = DatasetManifest(doc["dataset_id"], entries, base_dir)
    for entry in entries:
        full = manifest.audio_path(entry)
        if not os.path.isfile(full):
            raise FormatError(f"manifest references missing file: {full}")
    return manifest


def _resonator_coeffs(freq: float, bandwidth: float, sr: int):
    # two-pole resonance with unit peak gain at the pole angle
    r = np.exp(-np.pi * bandwidth / sr)
    theta = 2.0 * np.pi * freq / sr
    b = np.array([1.0 - r * r])
    a = np.array([1.0, -2.0 * r * np.cos(theta), r * r])
    return b, a


def _harmonic_segment(n: int, f0: float, formants, gain: float, sr: int) -> np.ndarray:
    t = np.arange(n) / sr
    n_harm = max(1, int((0.45 * sr) // f0))
    h = np.arange(1, n_harm + 1)
    # 1/h rolloff approximates a glottal-like source spectrum
    source = (np.sin(2.0 * np.pi * f0 * np.outer(t, h)) / h).sum(axis=1)
    out = source
    for freq, bw in formants:
        b, a = _resonator_coeffs(freq, bw, sr)
        out = lfilter(b, a, out)
    peak = np.abs(out).max()
    if peak > 0.0:
        out = out / peak
    return gain * out


def _draw_voice(rng) -> tuple:
    f0 = float(rng.uniform(100.0, 300.0))
    f1 = float(rng.uniform(300.0, 900.0))
    f2 = float(rng.uniform(1000.0, 2800.0))
    bw1 = float(rng.uniform(60.0, 150.0))
    bw2 = float(rng.uniform(80.0, 200.0))
    return f0, ((f1, bw1), (f2, bw2))


def _plan_segments(duration_range, rng) -> list:
    """Segment lengths (seconds) whose cross-faded total lands in range."""
    lo, hi = duration_range
    xf = CROSSFADE_S
    for _ in range(_MAX_PLAN_TRIES):
        n_seg = int(rng.integers(SEGMENTS_RANGE[0], SEGMENTS_RANGE[1] + 1))
        lens = rng.uniform(SEGMENT_RANGE_S[0], SEGMENT_RANGE_S[1], size=n_seg)
        total = float(lens.sum() - (n_seg - 1) * xf)
        if lo <= total <= hi:
            return [float(v) for v in lens]
    raise ValidationError(
        f"cannot satisfy duration range {duration_range} with "
        f"{SEGMENTS_RANGE[0]}-{SEGMENTS_RANGE[1]} segments of "
        f"{SEGMENT_RANGE_S[0]}-{SEGMENT_RANGE_S[1]} s"
    )


def synth_utterance(duration_range, rng, sr: int = CANONICAL_RATE) -> Signal:
    """One utterance: cross-faded harmonic segments, no two adjacent alike."""
    lens = _plan_segments(duration_range, rng)
    xf = int(round(CROSSFADE_S * sr))
    segs = []
    prev_voice = None
    for seg_len in lens:
        voice = _draw_voice(rng)
        while voice == prev_voice:  # measure-zero, but the contract is explicit
            voice = _draw_voice(rng)
        prev_voice = voice
        f0, formants = voice
        gain = float(rng.uniform(0.5, 1.0))
        n = int(round(seg_len * sr))
        segs.append(_harmonic_segment(n, f0, formants, gain, sr))

    total = sum(len(s) for s in segs) - (len(segs) - 1) * xf
    out = np.zeros(total)
    fade_in = 0.5 - 0.5 * np.cos(np.pi * np.arange(xf) / xf)
    pos = 0
    for i, seg in enumerate(segs):
        shaped = seg.copy()
        if i > 0:
            shaped[:xf] *= fade_in
        if i < len(segs) - 1:
            shaped[-xf:] *= fade_in[::-1]
        out[pos:pos + len(shaped)] += shaped
        pos += len(shaped) - xf
    peak = np.abs(out).max()
    if peak > 0.0:
        out = 0.5 * out / peak
    return Signal(out, sr)


def gen_synth_corpus(out_dir, n_train: int = 500, n_dev: int = 100,
                     duration_range=(2.0, 6.0), seed: int = 0) -> DatasetManifest:
    """Write a synthetic corpus and its manifest under out_dir.

    WAV files land in out_dir/wav, the manifest in out_dir/manifest.json.
    Byte-identical output for a fixed seed.
    """
    if n_train < 1:
        raise ValidationError(f"n_train must be >= 1, got {n_train}")
    if n_dev < 0:
        raise ValidationError(f"n_dev must be >= 0, got {n_dev}")
    lo, hi = duration_range
    if not (0.0 < lo <= hi):
        raise ValidationError(f"bad duration range {duration_range}")

    wav_dir = os.path.join(out_dir, "wav")
    os.makedirs(wav_dir, exist_ok=True)
    entries = []
    for split, count in (("train", n_train), ("dev", n_dev)):
        width = max(3, len(str(max(count - 1, 0))))
        for i in range(count):
            rng = derive_rng(seed, "corpus", split, i)
            sig = synth_utterance(duration_range, rng)
            uid = f"{split}_{i:0{width}d}"
            rel = os.path.join("wav", uid + ".wav")
            write_wav(sig, os.path.join(out_dir, rel))
            entries.append(ManifestEntry(id=uid, path=rel, split=split))

    manifest = DatasetManifest(
        dataset_id=f"synth-seed{seed}-{n_train}+{n_dev}",
        entries=entries,
        base_dir=os.path.abspath(out_dir),
    )
    write_manifest(os.path.join(out_dir, "manifest.json"), manifest)
    return manifest
