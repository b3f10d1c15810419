"""Frame encoder: waveform in, T' x D feature matrix out.

The built-in implementation is a deterministic log-mel spectrogram. Any
object with the same encode/frame_count/dim surface can stand in for it,
and precomputed feature matrices round-trip through a small binary format,
so externally computed features can be injected without new dependencies.
"""

from __future__ import annotations

import functools
import struct
from dataclasses import dataclass, field

import numpy as np

from .audio import CANONICAL_RATE, Signal
from .errors import FormatError, ValidationError

FEATURE_MAGIC = b"UEDF"
FEATURE_VERSION = 1


@dataclass(frozen=True)
class EncoderConfig:
    window_ms: float = 25.0
    hop_ms: float = 20.0
    n_fft: int = 512
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-10
    sample_rate: int = CANONICAL_RATE

    def __post_init__(self):
        if self.hop_ms > self.window_ms:
            raise ValidationError("hop_ms must not exceed window_ms")
        if self.fmax > self.sample_rate / 2:
            raise ValidationError("fmax must not exceed the Nyquist frequency")
        if self.fmin < 0 or self.fmin >= self.fmax:
            raise ValidationError("need 0 <= fmin < fmax")
        if self.n_mels < 1:
            raise ValidationError("n_mels must be positive")
        if self.window_samples > self.n_fft:
            raise ValidationError("window must fit inside n_fft")
        if self.log_floor <= 0:
            raise ValidationError("log_floor must be positive")

    @property
    def window_samples(self) -> int:
        return int(round(self.window_ms * self.sample_rate / 1000.0))

    @property
    def hop_samples(self) -> int:
        return int(round(self.hop_ms * self.sample_rate / 1000.0))

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.hop_samples


@dataclass(frozen=True)
class FrameSequence:
    """A T' x D matrix of continuous frame features."""

    frames: np.ndarray
    frame_rate: float

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2:
            raise ValidationError(f"frames must be 2-D, got shape {frames.shape}")
        if frames.size and not np.all(np.isfinite(frames)):
            raise ValidationError("frames must be finite")
        if self.frame_rate <= 0:
            raise ValidationError("frame_rate must be positive")
        object.__setattr__(self, "frames", frames)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    def __len__(self) -> int:
        return self.frames.shape[0]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@functools.lru_cache(maxsize=8)
def _mel_filterbank(cfg: EncoderConfig) -> np.ndarray:
    """Triangular filters, n_mels x (n_fft//2 + 1), unit peak."""
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2))
    bin_hz = np.arange(cfg.n_fft // 2 + 1) * cfg.sample_rate / cfg.n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (bin_hz - lo) / np.maximum(mid - lo, 1e-12)
    down = (hi - bin_hz) / np.maximum(hi - mid, 1e-12)
    return np.maximum(0.0, np.minimum(up, down))


@functools.lru_cache(maxsize=8)
def _hann(n: int) -> np.ndarray:
    # periodic Hann, the usual analysis window for STFT features
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_count(signal_len: int, config: EncoderConfig | None = None) -> int:
    """Number of frames a signal of the given length produces.

    Frames are left-aligned with no padding, so a signal shorter than one
    window yields zero frames.
    """
    cfg = config or EncoderConfig()
    if signal_len < cfg.window_samples:
        return 0
    return 1 + (signal_len - cfg.window_samples) // cfg.hop_samples


def encode(signal: Signal, config: EncoderConfig | None = None) -> FrameSequence:
    """Log-mel encode: frames = log(mel_fb @ |STFT|^2 + floor)."""
    cfg = config or EncoderConfig()
    if signal.sample_rate != cfg.sample_rate:
        raise ValidationError(
            f"encoder expects {cfg.sample_rate} Hz input, got {signal.sample_rate}"
        )
    n_frames = frame_count(len(signal), cfg)
    if n_frames == 0:
        return FrameSequence(np.zeros((0, cfg.n_mels)), cfg.frame_rate)

    win, hop = cfg.window_samples, cfg.hop_samples
    x = signal.samples
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    windowed = x[idx] * _hann(win)[None, :]
    power = np.abs(np.fft.rfft(windowed, n=cfg.n_fft, axis=1)) ** 2
    mel = power @ _mel_filterbank(cfg).T
    return FrameSequence(np.log(mel + cfg.log_floor), cfg.frame_rate)


class LogMelEncoder:
    """Deterministic spectral frame encoder with a fixed output dimension."""

    def __init__(self, config: EncoderConfig | None = None):
        self.config = config or EncoderConfig()

    @property
    def dim(self) -> int:
        return self.config.n_mels

    @property
    def frame_rate(self) -> float:
        return self.config.frame_rate

    def encode(self, signal: Signal) -> FrameSequence:
        return encode(signal, self.config)

    def frame_count(self, signal_len: int) -> int:
        return frame_count(signal_len, self.config)


def write_features(path, fs: FrameSequence) -> None:
    """Binary feature file: magic, version u32, T' u32, D u32, frame_rate
    f32 (all little-endian), then row-major f32 frames."""
    header = struct.pack(
        "<4sIIIf", FEATURE_MAGIC, FEATURE_VERSION, fs.num_frames, fs.dim, fs.frame_rate
    )
    body = np.ascontiguousarray(fs.frames, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body)


def read_features(path) -> FrameSequence:
    with open(path, "rb") as fh:
        raw = fh.read()
    head_len = struct.calcsize("<4sIIIf")
    if len(raw) < head_len:
        raise FormatError(f"{path}: truncated feature file")
    magic, version, n_frames, dim, frame_rate = struct.unpack("<4sIIIf", raw[:head_len])
    if magic != FEATURE_MAGIC:
        raise FormatError(f"{path}: not a feature file (bad magic {magic!r})")
    if version != FEATURE_VERSION:
        raise FormatError(f"{path}: unsupported feature file version {version}")
    expect = head_len + 4 * n_frames * dim
    if len(raw) != expect:
        raise FormatError(f"{path}: expected {expect} bytes, found {len(raw)}")
    frames = np.frombuffer(raw[head_len:], dtype="<f4").reshape(n_frames, dim)
    return FrameSequence(frames.astype(np.float64), float(frame_rate))
