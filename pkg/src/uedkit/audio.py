"""Waveform container, WAV file I/O, resampling and seeded randomness.

All audio inside the toolkit is mono float64. Ingested files are downmixed
and (by callers) resampled to the canonical 16 kHz rate so every downstream
stage sees one frame-rate contract.
"""

from __future__ import annotations

import functools
import hashlib
import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile
from scipy.special import i0 as _bessel_i0

from .errors import FormatError, UnsupportedFormatError, ValidationError

log = logging.getLogger(__name__)

CANONICAL_RATE = 16_000

# Windowed-sinc resampler quality knobs.
_RESAMPLE_TAPS = 64
_RESAMPLE_KAISER_BETA = 8.6
_KERNEL_SUBDIV = 512  # kernel table resolution per unit of tap spacing


@dataclass(frozen=True)
class Signal:
    """Mono waveform: sample array plus its rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValidationError(f"Signal must be mono 1-D, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValidationError("Signal contains NaN or Inf samples")
        if int(self.sample_rate) <= 0:
            raise ValidationError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic generator (PCG64) for a 64-bit seed."""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def derive_seed(root_seed: int, *parts) -> int:
    """Derive a child seed from a root seed and a purpose tag / index path.

    Hash-based so that streams for different purposes never overlap and the
    scheme is stable across platforms and runs.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(root_seed)).encode())
    for part in parts:
        h.update(b"/")
        h.update(str(part).encode())
    return int.from_bytes(h.digest(), "little")


def derive_rng(root_seed: int, *parts) -> np.random.Generator:
    return make_rng(derive_seed(root_seed, *parts))


def read_wav(path) -> Signal:
    """Load a RIFF WAV file as a mono Signal.

    PCM16, PCM32 and IEEE float32/64 encodings are accepted; multi-channel
    input is averaged down to mono. Integer samples are scaled so that the
    positive full-scale value maps just below +1.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", wavfile.WavFileWarning)
        try:
            rate, data = wavfile.read(path)
        except FileNotFoundError:
            raise
        except ValueError as exc:
            raise FormatError(f"{path}: malformed WAV ({exc})") from exc

    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    elif data.dtype == np.uint8:
        raise UnsupportedFormatError(f"{path}: 8-bit PCM is not supported")
    else:
        raise UnsupportedFormatError(f"{path}: unsupported sample dtype {data.dtype}")

    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    return Signal(samples, int(rate))


def write_wav(signal: Signal, path, encoding: str = "pcm16") -> None:
    """Write a Signal to a WAV file (little-endian PCM16 or float32).

    Samples outside [-1, 1] are hard-clipped with a logged warning; noise
    mixing and reverberation can overshoot slightly.
    """
    samples = signal.samples
    peak = float(np.max(np.abs(samples))) if len(samples) else 0.0
    if peak > 1.0:
        log.warning("write_wav: clipping %d samples (peak %.4f) in %s",
                    int(np.sum(np.abs(samples) > 1.0)), peak, path)
        samples = np.clip(samples, -1.0, 1.0)

    if encoding == "pcm16":
        pcm = np.clip(np.round(samples * 32768.0), -32768, 32767).astype(np.int16)
        wavfile.write(path, signal.sample_rate, pcm)
    elif encoding == "float32":
        wavfile.write(path, signal.sample_rate, samples.astype(np.float32))
    else:
        raise ValidationError(f"unknown encoding {encoding!r}")


def _kaiser(u: np.ndarray, half_width: float) -> np.ndarray:
    """Kaiser window evaluated at continuous offsets u, zero outside support."""
    inside = np.abs(u) <= half_width
    arg = np.zeros_like(u)
    arg[inside] = 1.0 - (u[inside] / half_width) ** 2
    w = _bessel_i0(_RESAMPLE_KAISER_BETA * np.sqrt(arg)) / _bessel_i0(_RESAMPLE_KAISER_BETA)
    return np.where(inside, w, 0.0)


@functools.lru_cache(maxsize=32)
def _kernel_table(cutoff: float) -> np.ndarray:
    """Tabulated interpolation kernel h(u) = cutoff*sinc(cutoff*u)*kaiser(u)."""
    half = _RESAMPLE_TAPS // 2
    u = np.arange(half * _KERNEL_SUBDIV + 2) / _KERNEL_SUBDIV  # one guard point
    return cutoff * np.sinc(cutoff * u) * _kaiser(u, half)


def resample_by_ratio(x: np.ndarray, step: float, n_out: int | None = None) -> np.ndarray:
    """Windowed-sinc resampling: output[n] = x(n * step); step > 1 decimates.

    The kernel is evaluated from a finely tabulated windowed sinc with linear
    interpolation (error ~1e-6), which keeps long pitch-shift resamples cheap.
    """
    x = np.asarray(x, dtype=np.float64)
    if len(x) == 0:
        return x.copy()
    if n_out is None:
        n_out = int(round(len(x) / step))
    if n_out <= 0:
        return np.zeros(0)

    half = _RESAMPLE_TAPS // 2
    cutoff = min(1.0, 1.0 / step)
    table = _kernel_table(cutoff)

    positions = np.arange(n_out) * step
    base = np.floor(positions).astype(np.int64)
    frac = positions - base

    offsets = np.arange(-half + 1, half + 1)
    # |u| <= half for every (output, tap) pair
    u = np.abs(frac[:, None] - offsets[None, :])
    scaled = u * _KERNEL_SUBDIV
    left = scaled.astype(np.int64)
    blend = scaled - left
    kernel = table[left] * (1.0 - blend) + table[left + 1] * blend

    # explicit n_out may reach past the source; pad enough zeros either way
    right = max(half + 1, int(base.max()) + half + 1 - len(x))
    padded = np.concatenate([np.zeros(half), x, np.zeros(right)])
    idx = base[:, None] + offsets[None, :] + half
    return np.einsum("ij,ij->i", padded[idx], kernel)


def resample(signal: Signal, target_rate: int) -> Signal:
    """Band-limited resampling to target_rate.

    Output length is round(len * target_rate / sample_rate); resampling at
    the identical rate returns the signal unchanged.
    """
    if target_rate <= 0:
        raise ValidationError(f"target_rate must be positive, got {target_rate}")
    if target_rate == signal.sample_rate:
        return signal
    n_out = int(round(len(signal) * target_rate / signal.sample_rate))
    step = signal.sample_rate / target_rate
    return Signal(resample_by_ratio(signal.samples, step, n_out), target_rate)
