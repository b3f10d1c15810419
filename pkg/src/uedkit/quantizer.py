"""Discrete quantizers mapping frame features to unit sequences.

Two kinds: a k-means model (the baseline teacher) and a three-layer MLP
whose output carries one extra logit column reserved for the alignment
blank during training. Units are 0-based integers in {0..K-1}; the unit
text format writes them 0-based too.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .encoder import FrameSequence
from .errors import FormatError, ValidationError

QUANTIZER_MAGIC = b"UEDQ"
QUANTIZER_VERSION = 1
_KIND_KMEANS = 0
_KIND_MLP = 1

LEAKY_SLOPE = 0.01


@dataclass(frozen=True)
class UnitSequence:
    """Integer unit ids for one utterance, each in {0..K-1}."""

    units: np.ndarray
    K: int

    def __post_init__(self):
        units = np.asarray(self.units, dtype=np.int64)
        if units.ndim != 1:
            raise ValidationError("units must be a 1-D sequence")
        if self.K < 1:
            raise ValidationError("K must be >= 1")
        if len(units) and (units.min() < 0 or units.max() >= self.K):
            raise ValidationError(f"units must lie in [0, {self.K})")
        object.__setattr__(self, "units", units)

    def __len__(self) -> int:
        return len(self.units)

    def __iter__(self):
        return iter(self.units.tolist())


def _dedup_array(units: np.ndarray) -> np.ndarray:
    units = np.asarray(units, dtype=np.int64)
    if len(units) == 0:
        return units.copy()
    keep = np.ones(len(units), dtype=bool)
    keep[1:] = units[1:] != units[:-1]
    return units[keep]


def dedup(units):
    """Collapse maximal runs of equal adjacent units to a single occurrence."""
    if isinstance(units, UnitSequence):
        return UnitSequence(_dedup_array(units.units), units.K)
    return _dedup_array(np.asarray(units))


def _frames_matrix(frames) -> np.ndarray:
    if isinstance(frames, FrameSequence):
        return frames.frames
    mat = np.asarray(frames, dtype=np.float64)
    if mat.ndim != 2:
        raise ValidationError(f"frames must be 2-D, got shape {mat.shape}")
    return mat


@dataclass(frozen=True)
class KMeansQuantizer:
    centroids: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.centroids, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] < 1:
            raise ValidationError("centroids must be a K x D matrix with K >= 1")
        if not np.all(np.isfinite(c)):
            raise ValidationError("centroids must be finite")
        if len(np.unique(c, axis=0)) != c.shape[0]:
            raise ValidationError("centroids must be pairwise distinct")
        object.__setattr__(self, "centroids", c)

    @property
    def K(self) -> int:
        return self.centroids.shape[0]

    @property
    def D(self) -> int:
        return self.centroids.shape[1]

    def quantize(self, frames) -> UnitSequence:
        return kmeans_quantize(self, frames)


def _sq_distances(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    # ||x - c||^2 expanded; clamp the rounding-induced negatives
    d2 = (X * X).sum(axis=1)[:, None] - 2.0 * (X @ C.T) + (C * C).sum(axis=1)[None, :]
    return np.maximum(d2, 0.0)


def kmeans_plus_plus_init(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    """Seed centroids: first uniform, rest proportional to squared distance
    from the nearest centroid chosen so far."""
    n = X.shape[0]
    centroids = np.empty((K, X.shape[1]))
    centroids[0] = X[rng.integers(n)]
    d2 = _sq_distances(X, centroids[:1])[:, 0]
    for k in range(1, K):
        total = d2.sum()
        if total <= 0.0:
            centroids[k] = X[rng.integers(n)]
        else:
            centroids[k] = X[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, _sq_distances(X, centroids[k : k + 1])[:, 0])
    return centroids


def lloyd_iteration(X: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, float, np.ndarray]:
    """One Lloyd step: assign to nearest centroid, move centroids to the
    assigned means, re-seed empty clusters to the farthest points.

    Returns (new_centroids, inertia_before_update, assignment).
    """
    d2 = _sq_distances(X, centroids)
    assign = d2.argmin(axis=1)
    point_d2 = d2[np.arange(len(X)), assign]
    inertia = float(point_d2.sum())

    K = centroids.shape[0]
    new = np.zeros_like(centroids)
    counts = np.bincount(assign, minlength=K).astype(np.float64)
    np.add.at(new, assign, X)
    filled = counts > 0
    new[filled] /= counts[filled, None]

    if not filled.all():
        # claim the worst-fit points, one per empty cluster
        spare = point_d2.copy()
        for k in np.flatnonzero(~filled):
            far = int(spare.argmax())
            new[k] = X[far]
            spare[far] = -np.inf
    return new, inertia, assign


def kmeans_fit(
    frames_dataset,
    K: int,
    max_iters: int = 300,
    tol: float = 1e-4,
    rng: np.random.Generator | None = None,
) -> KMeansQuantizer:
    """Fit a k-means quantizer with k-means++ seeding and Lloyd iterations.

    Stops when the largest centroid movement drops below tol or after
    max_iters. Requires at least K distinct rows in the dataset.
    """
    if rng is None:
        rng = np.random.default_rng()
    if isinstance(frames_dataset, (list, tuple)):
        X = np.vstack([_frames_matrix(f) for f in frames_dataset])
    else:
        X = _frames_matrix(frames_dataset)
    if K < 1:
        raise ValidationError("K must be >= 1")
    if len(np.unique(X, axis=0)) < K:
        raise ValidationError(f"need at least {K} distinct frames to fit K={K}")

    centroids = kmeans_plus_plus_init(X, K, rng)
    for _ in range(max_iters):
        new, _, _ = lloyd_iteration(X, centroids)
        shift = float(np.sqrt(((new - centroids) ** 2).sum(axis=1)).max())
        centroids = new
        if shift < tol:
            break
    return KMeansQuantizer(centroids)


def kmeans_quantize(quantizer: KMeansQuantizer, frames) -> UnitSequence:
    """Map each frame to its nearest centroid; ties go to the lowest index."""
    X = _frames_matrix(frames)
    if X.shape[1] != quantizer.D:
        raise ValidationError(f"frame dim {X.shape[1]} != quantizer dim {quantizer.D}")
    if X.shape[0] == 0:
        return UnitSequence(np.zeros(0, dtype=np.int64), quantizer.K)
    assign = _sq_distances(X, quantizer.centroids).argmin(axis=1)
    return UnitSequence(assign.astype(np.int64), quantizer.K)


def mlp_hidden_dims(D: int, K: int) -> tuple[int, int]:
    """Interpolate layer widths from input dim D down toward K, never below
    the K+1 output width."""
    delta = (D - K) // 3
    h1 = max(D - delta, K + 1)
    h2 = max(D - 2 * delta, K + 1)
    return h1, h2


@dataclass(frozen=True)
class MlpQuantizer:
    """Three affine layers with LeakyReLU between; last logit column is the
    alignment blank, excluded when quantizing."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2", "w3", "b3"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            expect = 2 if name.startswith("w") else 1
            if arr.ndim != expect:
                raise ValidationError(f"{name} must be {expect}-D")
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} must be finite")
            object.__setattr__(self, name, arr)
        if self.w1.shape[0] != self.b1.shape[0]:
            raise ValidationError("w1/b1 shape mismatch")
        if self.w2.shape != (self.b2.shape[0], self.w1.shape[0]):
            raise ValidationError("w2 shape mismatch")
        if self.w3.shape != (self.b3.shape[0], self.w2.shape[0]):
            raise ValidationError("w3 shape mismatch")
        if self.w3.shape[0] < 2:
            raise ValidationError("output needs at least one unit plus blank")

    @property
    def D(self) -> int:
        return self.w1.shape[1]

    @property
    def K(self) -> int:
        return self.w3.shape[0] - 1

    @property
    def hidden_dims(self) -> tuple[int, int]:
        return self.w1.shape[0], self.w2.shape[0]

    @classmethod
    def initialize(cls, D: int, K: int, rng: np.random.Generator) -> "MlpQuantizer":
        h1, h2 = mlp_hidden_dims(D, K)
        def he(out, inp):
            return rng.normal(0.0, np.sqrt(2.0 / inp), size=(out, inp))
        return cls(
            w1=he(h1, D), b1=np.zeros(h1),
            w2=he(h2, h1), b2=np.zeros(h2),
            w3=he(K + 1, h2), b3=np.zeros(K + 1),
        )

    def quantize(self, frames) -> UnitSequence:
        return mlp_quantize(self, frames)


def leaky_relu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0.0, x, LEAKY_SLOPE * x)


def mlp_forward_cached(q: MlpQuantizer, frames):
    """Forward pass keeping pre-activations for backprop.

    Returns (logits, cache) with cache = (X, z1, a1, z2, a2).
    """
    X = _frames_matrix(frames)
    if X.shape[1] != q.D:
        raise ValidationError(f"frame dim {X.shape[1]} != quantizer dim {q.D}")
    z1 = X @ q.w1.T + q.b1
    a1 = leaky_relu(z1)
    z2 = a1 @ q.w2.T + q.b2
    a2 = leaky_relu(z2)
    logits = a2 @ q.w3.T + q.b3
    return logits, (X, z1, a1, z2, a2)


def mlp_forward(q: MlpQuantizer, frames) -> np.ndarray:
    """Per-frame logits, shape (T', K+1); blank is the last column."""
    return mlp_forward_cached(q, frames)[0]


def mlp_quantize(q: MlpQuantizer, frames) -> UnitSequence:
    """Argmax over the K unit logits; the blank column never wins because
    every frame must emit a unit. Ties go to the lowest unit id."""
    logits = mlp_forward(q, frames)
    units = logits[:, : q.K].argmax(axis=1)
    return UnitSequence(units.astype(np.int64), q.K)


def quantize(quantizer, frames) -> UnitSequence:
    """Dispatch to the right quantize op for the quantizer kind."""
    if isinstance(quantizer, KMeansQuantizer):
        return kmeans_quantize(quantizer, frames)
    if isinstance(quantizer, MlpQuantizer):
        return mlp_quantize(quantizer, frames)
    raise ValidationError(f"unknown quantizer type {type(quantizer).__name__}")


def _pack_f32(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def serialize_quantizer(quantizer) -> bytes:
    """Binary quantizer image: magic, version, kind, K, D (little-endian
    u32), kind-specific dims, then f32 little-endian parameters."""
    if isinstance(quantizer, KMeansQuantizer):
        head = struct.pack(
            "<4sIIII", QUANTIZER_MAGIC, QUANTIZER_VERSION, _KIND_KMEANS,
            quantizer.K, quantizer.D,
        )
        body = _pack_f32(quantizer.centroids)
    elif isinstance(quantizer, MlpQuantizer):
        h1, h2 = quantizer.hidden_dims
        head = struct.pack(
            "<4sIIIIII", QUANTIZER_MAGIC, QUANTIZER_VERSION, _KIND_MLP,
            quantizer.K, quantizer.D, h1, h2,
        )
        body = b"".join(
            _pack_f32(p)
            for p in (quantizer.w1, quantizer.b1, quantizer.w2,
                      quantizer.b2, quantizer.w3, quantizer.b3)
        )
    else:
        raise ValidationError(f"unknown quantizer type {type(quantizer).__name__}")
    return head + body


def save_quantizer(path, quantizer) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_quantizer(quantizer))


def quantizer_fingerprint(quantizer) -> str:
    """Short stable id of a quantizer's serialized parameters."""
    return hashlib.blake2b(serialize_quantizer(quantizer), digest_size=8).hexdigest()


def _take_f32(raw: bytes, offset: int, shape) -> tuple[np.ndarray, int]:
    count = int(np.prod(shape))
    end = offset + 4 * count
    if end > len(raw):
        raise FormatError("quantizer file truncated")
    arr = np.frombuffer(raw[offset:end], dtype="<f4").astype(np.float64).reshape(shape)
    return arr, end


def load_quantizer(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    base = struct.calcsize("<4sIIII")
    if len(raw) < base:
        raise FormatError(f"{path}: truncated quantizer file")
    magic, version, kind, K, D = struct.unpack("<4sIIII", raw[:base])
    if magic != QUANTIZER_MAGIC:
        raise FormatError(f"{path}: not a quantizer file (bad magic {magic!r})")
    if version != QUANTIZER_VERSION:
        raise FormatError(f"{path}: unsupported quantizer version {version}")
    if kind == _KIND_KMEANS:
        centroids, end = _take_f32(raw, base, (K, D))
        if end != len(raw):
            raise FormatError(f"{path}: trailing bytes after centroids")
        return KMeansQuantizer(centroids)
    if kind == _KIND_MLP:
        dims_len = struct.calcsize("<II")
        if len(raw) < base + dims_len:
            raise FormatError(f"{path}: truncated quantizer file")
        h1, h2 = struct.unpack("<II", raw[base : base + dims_len])
        off = base + dims_len
        w1, off = _take_f32(raw, off, (h1, D))
        b1, off = _take_f32(raw, off, (h1,))
        w2, off = _take_f32(raw, off, (h2, h1))
        b2, off = _take_f32(raw, off, (h2,))
        w3, off = _take_f32(raw, off, (K + 1, h2))
        b3, off = _take_f32(raw, off, (K + 1,))
        if off != len(raw):
            raise FormatError(f"{path}: trailing bytes after parameters")
        return MlpQuantizer(w1=w1, b1=b1, w2=w2, b2=b2, w3=w3, b3=b3)
    raise FormatError(f"{path}: unknown quantizer kind {kind}")


def round_to_f32(quantizer):
    """Snap parameters to their f32 file representation so the in-memory
    model and its saved form quantize identically."""
    def f32(a):
        return a.astype(np.float32).astype(np.float64)
    if isinstance(quantizer, KMeansQuantizer):
        return KMeansQuantizer(f32(quantizer.centroids))
    if isinstance(quantizer, MlpQuantizer):
        return MlpQuantizer(
            w1=f32(quantizer.w1), b1=f32(quantizer.b1),
            w2=f32(quantizer.w2), b2=f32(quantizer.b2),
            w3=f32(quantizer.w3), b3=f32(quantizer.b3),
        )
    raise ValidationError(f"unknown quantizer type {type(quantizer).__name__}")


def write_units(path, sequences) -> None:
    """Unit text format: one utterance per line, whitespace-separated
    0-based integer ids."""
    with open(path, "w", encoding="ascii") as fh:
        for seq in sequences:
            units = seq.units if isinstance(seq, UnitSequence) else np.asarray(seq)
            fh.write(" ".join(str(int(u)) for u in units))
            fh.write("\n")


def read_units(path) -> list[np.ndarray]:
    out = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                out.append(np.zeros(0, dtype=np.int64))
            else:
                try:
                    out.append(np.array([int(tok) for tok in line.split()], dtype=np.int64))
                except ValueError as exc:
                    raise FormatError(f"{path}: bad unit token ({exc})") from None
    return out
