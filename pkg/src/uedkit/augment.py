"""Content-preserving waveform augmentations.

Four families: time stretch (phase vocoder), pitch shift (stretch then
resample), reverberation (image-source room impulse responses), and
additive noise at a target SNR. Sampling a family template yields a
concrete transform that is a pure function of its stored parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.signal

from .audio import Signal, read_wav, resample, resample_by_ratio, _kaiser
from .errors import DegenerateSignalError, ValidationError

SPEED_OF_SOUND = 343.0

PV_WINDOW = 2048
PV_HOP = 512

RIR_TAPS = 81

_NOISE_KINDS = ("white", "pink", "babble")


# ---------------------------------------------------------------- stretch

def _hann_periodic(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def time_stretch(signal: Signal, rate: float, rng=None) -> Signal:
    """Phase-vocoder time stretch: rate > 1 speeds up (shorter output).

    Output length is exactly round(len / rate). The rng argument exists to
    give all transforms one call shape; the vocoder itself draws nothing.
    """
    if rate <= 0:
        raise ValidationError(f"stretch rate must be positive, got {rate}")
    n = len(signal)
    if n < PV_WINDOW:
        raise DegenerateSignalError(
            f"need at least {PV_WINDOW} samples to stretch, got {n}"
        )
    n_out = int(round(n / rate))

    # pad so the tail falls inside an analysis frame
    pad = (-(n - PV_WINDOW)) % PV_HOP
    x = np.concatenate([signal.samples, np.zeros(pad)])
    win = _hann_periodic(PV_WINDOW)
    n_frames = 1 + (len(x) - PV_WINDOW) // PV_HOP

    pos = PV_HOP * np.arange(n_frames)
    frames = x[pos[:, None] + np.arange(PV_WINDOW)[None, :]] * win
    spec = np.fft.rfft(frames, axis=1)
    mag = np.abs(spec)
    phase = np.angle(spec)

    # per-bin instantaneous frequency from successive analysis phases
    omega = 2.0 * np.pi * np.arange(spec.shape[1]) / PV_WINDOW
    expected = omega * PV_HOP
    dev = phase[1:] - phase[:-1] - expected
    dev -= 2.0 * np.pi * np.round(dev / (2.0 * np.pi))
    inst = (expected + dev) / PV_HOP

    hop_out = PV_HOP / rate
    acc = np.empty_like(phase)
    acc[0] = phase[0]
    np.cumsum(inst * hop_out, axis=0, out=acc[1:])
    acc[1:] += phase[0]

    out_frames = np.fft.irfft(mag * np.exp(1j * acc), n=PV_WINDOW, axis=1) * win
    out_pos = np.round(hop_out * np.arange(n_frames)).astype(np.int64)

    total = int(out_pos[-1]) + PV_WINDOW
    y = np.zeros(total)
    wsum = np.zeros(total)
    for t in range(n_frames):
        sl = slice(out_pos[t], out_pos[t] + PV_WINDOW)
        y[sl] += out_frames[t]
        wsum[sl] += win * win
    good = wsum > 1e-8
    y[good] /= wsum[good]

    if len(y) >= n_out:
        y = y[:n_out]
    else:
        y = np.concatenate([y, np.zeros(n_out - len(y))])
    return Signal(y, signal.sample_rate)


def pitch_shift(signal: Signal, semitones: float, rng=None) -> Signal:
    """Shift pitch by a factor 2^(s/12) at unchanged length: slow the signal
    down by that factor, then play the stretched result back faster."""
    ratio = 2.0 ** (semitones / 12.0)
    stretched = time_stretch(signal, rate=1.0 / ratio)
    y = resample_by_ratio(stretched.samples, step=ratio, n_out=len(signal))
    return Signal(y, signal.sample_rate)


# ------------------------------------------------------------------- room

@dataclass(frozen=True)
class RoomConfig:
    """Shoebox room with one source and one microphone."""

    dims: tuple[float, float, float]
    source: tuple[float, float, float]
    mic: tuple[float, float, float]
    absorption: float
    max_order: int = 6

    def __post_init__(self):
        dims = tuple(float(v) for v in self.dims)
        src = tuple(float(v) for v in self.source)
        mic = tuple(float(v) for v in self.mic)
        if len(dims) != 3 or len(src) != 3 or len(mic) != 3:
            raise ValidationError("dims, source, and mic must be 3-D")
        if any(d <= 0 for d in dims):
            raise ValidationError("room dimensions must be positive")
        for name, p in (("source", src), ("mic", mic)):
            if any(not (0.0 < p[i] < dims[i]) for i in range(3)):
                raise ValidationError(f"{name} must lie strictly inside the room")
        if not (0.0 < self.absorption <= 1.0):
            raise ValidationError("absorption must be in (0, 1]")
        if self.max_order < 0:
            raise ValidationError("max_order must be >= 0")
        if all(abs(src[i] - mic[i]) < 1e-9 for i in range(3)):
            raise ValidationError("source and mic must not coincide")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "source", src)
        object.__setattr__(self, "mic", mic)


def _image_axis(src: float, length: float, max_order: int):
    """Image coordinates and reflection counts along one room axis."""
    coords, counts = [], []
    m_max = max_order // 2 + 1
    for m in range(-m_max, m_max + 1):
        for p in (0, 1):
            refl = 2 * abs(m) if p == 0 else abs(2 * m - 1)
            if refl > max_order:
                continue
            coords.append((1 - 2 * p) * src + 2.0 * m * length)
            counts.append(refl)
    return np.array(coords), np.array(counts)


def simulate_rir(config: RoomConfig, sample_rate: int = 16000) -> Signal:
    """Image-source room impulse response.

    Each image contributes gain (1-absorption)^reflections / (4 pi d) at
    delay d / 343 s, written as an 81-tap windowed-sinc fractional impulse.
    """
    xs, xc = _image_axis(config.source[0], config.dims[0], config.max_order)
    ys, yc = _image_axis(config.source[1], config.dims[1], config.max_order)
    zs, zc = _image_axis(config.source[2], config.dims[2], config.max_order)

    order = xc[:, None, None] + yc[None, :, None] + zc[None, None, :]
    keep = order <= config.max_order
    dx = xs[:, None, None] - config.mic[0]
    dy = ys[None, :, None] - config.mic[1]
    dz = zs[None, None, :] - config.mic[2]
    dist = np.sqrt((dx**2 + dy**2 + dz**2)[keep])
    refl = order[keep]

    gains = (1.0 - config.absorption) ** refl / (4.0 * np.pi * dist)
    delays = dist / SPEED_OF_SOUND * sample_rate

    half = RIR_TAPS // 2
    length = int(np.ceil(delays.max())) + half + 1
    rir = np.zeros(length)
    centers = np.round(delays).astype(np.int64)
    offsets = np.arange(-half, half + 1)
    taps_at = centers[:, None] + offsets[None, :]
    u = taps_at - delays[:, None]
    taps = np.sinc(u) * _kaiser(np.abs(u), half)
    np.add.at(rir, taps_at.reshape(-1), (gains[:, None] * taps).reshape(-1))
    return Signal(rir, sample_rate)


def reverberate(signal: Signal, rir: Signal) -> Signal:
    """Full convolution with an impulse response, peak-matched to the dry
    input so the encoder sees a stable scale."""
    if len(signal) == 0 or len(rir) == 0:
        raise ValidationError("signal and rir must be non-empty")
    if signal.sample_rate != rir.sample_rate:
        raise ValidationError("signal and rir sample rates differ")
    wet = scipy.signal.fftconvolve(signal.samples, rir.samples)
    peak_in = np.abs(signal.samples).max()
    peak_out = np.abs(wet).max()
    if peak_out > 0.0:
        wet *= peak_in / peak_out
    return Signal(wet, signal.sample_rate)


# ------------------------------------------------------------------ noise

def gen_white(n: int, rng: np.random.Generator) -> np.ndarray:
    x = rng.standard_normal(n)
    return x / max(np.sqrt(np.mean(x * x)), 1e-12)


def gen_pink(n: int, rng: np.random.Generator) -> np.ndarray:
    """1/f-shaped noise via spectral weighting of white noise."""
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n)
    weight = np.zeros_like(freqs)
    weight[1:] = 1.0 / np.sqrt(freqs[1:])
    x = np.fft.irfft(spec * weight, n=n)
    return x / max(np.sqrt(np.mean(x * x)), 1e-12)


def gen_babble(n: int, rng: np.random.Generator, voices: int = 6) -> np.ndarray:
    """Speech-band noise with slow independent amplitude wobble per stream,
    a rough stand-in for overlapping talkers."""
    freqs = np.fft.rfftfreq(n, d=1.0 / 16000.0)
    band = ((freqs >= 100.0) & (freqs <= 4000.0)).astype(np.float64)
    total = np.zeros(n)
    for _ in range(voices):
        stream = np.fft.irfft(np.fft.rfft(rng.standard_normal(n)) * band, n=n)
        # envelope: heavily smoothed rectified noise, ~4 Hz fluctuation
        env_len = max(n // 64, 1)
        env = rng.standard_normal(env_len) ** 2
        env = np.interp(np.arange(n), np.linspace(0, n - 1, env_len), env)
        total += stream * (0.2 + env)
    return total / max(np.sqrt(np.mean(total * total)), 1e-12)


_GENERATORS = {"white": gen_white, "pink": gen_pink, "babble": gen_babble}


def add_noise(signal: Signal, noise: np.ndarray, snr_db: float, rng=None) -> Signal:
    """Mix noise into the signal at an exact SNR.

    The noise is cropped (or looped) to the signal length at an offset drawn
    from rng, and the mixing gain is computed on that exact segment, so the
    achieved SNR equals the request to float precision.
    """
    noise = np.asarray(noise, dtype=np.float64)
    n = len(signal)
    if len(noise) == 0 or not np.any(noise):
        raise ValidationError("noise must be non-silent")
    if not np.any(signal.samples):
        raise ValidationError("cannot set an SNR against an all-zero signal")
    if rng is None:
        rng = np.random.default_rng()

    if len(noise) >= n:
        offset = int(rng.integers(0, len(noise) - n + 1))
        segment = noise[offset : offset + n]
    else:
        offset = int(rng.integers(0, len(noise)))
        segment = noise[(offset + np.arange(n)) % len(noise)]

    p_sig = float(np.mean(signal.samples**2))
    p_noise = float(np.mean(segment**2))
    if p_noise <= 0.0:
        raise ValidationError("selected noise segment is silent")
    beta = math.sqrt(p_sig / (p_noise * 10.0 ** (snr_db / 10.0)))
    return Signal(signal.samples + beta * segment, signal.sample_rate)


# ------------------------------------------------- templates and sampling

@dataclass(frozen=True)
class AugmentationSpec:
    """A parameterized augmentation family with its sampling ranges."""

    kind: str
    rate_range: tuple[float, float] = (0.8, 1.2)
    max_semitones: int = 4
    snr_range: tuple[float, float] = (5.0, 15.0)
    noise_sources: tuple = _NOISE_KINDS
    xy_range: tuple[float, float] = (3.0, 10.0)
    z_range: tuple[float, float] = (2.5, 4.0)
    absorption_range: tuple[float, float] = (0.2, 0.8)
    max_order: int = 6

    def __post_init__(self):
        if self.kind not in ("time_stretch", "pitch_shift", "reverb", "noise",
                             "identity"):
            raise ValidationError(f"unknown augmentation kind {self.kind!r}")
        for name in ("rate_range", "snr_range", "xy_range", "z_range", "absorption_range"):
            lo, hi = getattr(self, name)
            if not (lo <= hi):
                raise ValidationError(f"{name} must be ordered, got ({lo}, {hi})")
        if self.rate_range[0] <= 0:
            raise ValidationError("stretch rates must be positive")
        if self.max_semitones < 1:
            raise ValidationError("max_semitones must be >= 1")
        if not self.noise_sources:
            raise ValidationError("noise_sources must be non-empty")


@dataclass(frozen=True)
class AugmentationSet:
    """Pool of family templates a concrete transform is drawn from."""

    specs: tuple

    def __post_init__(self):
        specs = tuple(self.specs)
        if not specs:
            raise ValidationError("augmentation set must be non-empty")
        if not all(isinstance(s, AugmentationSpec) for s in specs):
            raise ValidationError("augmentation set holds AugmentationSpec items")
        object.__setattr__(self, "specs", specs)

    def __len__(self) -> int:
        return len(self.specs)


def default_augmentation_set() -> AugmentationSet:
    return AugmentationSet(
        (
            AugmentationSpec("time_stretch"),
            AugmentationSpec("pitch_shift"),
            AugmentationSpec("reverb"),
            AugmentationSpec("noise"),
        )
    )


@dataclass(frozen=True)
class Identity:
    """No-op transform; the control condition in evaluations."""

    kind: str = field(default="identity", init=False)

    def apply(self, signal: Signal) -> Signal:
        return signal

    def describe(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class TimeStretch:
    rate: float
    kind: str = field(default="time_stretch", init=False)

    def apply(self, signal: Signal) -> Signal:
        return time_stretch(signal, self.rate)

    def describe(self) -> dict:
        return {"kind": self.kind, "rate": self.rate}


@dataclass(frozen=True)
class PitchShift:
    semitones: int
    kind: str = field(default="pitch_shift", init=False)

    def apply(self, signal: Signal) -> Signal:
        return pitch_shift(signal, self.semitones)

    def describe(self) -> dict:
        return {"kind": self.kind, "semitones": self.semitones}


@dataclass(frozen=True)
class Reverb:
    room: RoomConfig
    kind: str = field(default="reverb", init=False)

    def apply(self, signal: Signal) -> Signal:
        return reverberate(signal, simulate_rir(self.room, signal.sample_rate))

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "dims": list(self.room.dims),
            "source": list(self.room.source),
            "mic": list(self.room.mic),
            "absorption": self.room.absorption,
            "max_order": self.room.max_order,
        }


@dataclass(frozen=True)
class NoiseInjection:
    snr_db: float
    source: str
    seed: int
    offset_frac: float
    kind: str = field(default="noise", init=False)

    def _noise_for(self, signal: Signal) -> tuple[np.ndarray, np.random.Generator]:
        rng = np.random.default_rng(self.seed)
        if self.source in _GENERATORS:
            return _GENERATORS[self.source](len(signal), rng), rng
        wav = read_wav(self.source)
        wav = resample(wav, signal.sample_rate)
        return wav.samples, rng

    def apply(self, signal: Signal) -> Signal:
        noise, _ = self._noise_for(signal)
        if len(noise) >= len(signal):
            span = len(noise) - len(signal) + 1
        else:
            span = len(noise)
        offset = min(int(self.offset_frac * span), span - 1)
        # replay the stored offset through a fixed-choice rng
        class _Fixed:
            def integers(self, lo, hi):
                return offset
        return add_noise(signal, noise, self.snr_db, rng=_Fixed())

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "snr_db": self.snr_db,
            "source": str(self.source),
            "seed": self.seed,
            "offset_frac": self.offset_frac,
        }


def _sample_room(spec: AugmentationSpec, rng: np.random.Generator) -> RoomConfig:
    margin = 0.5
    for _ in range(64):
        dims = (
            float(rng.uniform(*spec.xy_range)),
            float(rng.uniform(*spec.xy_range)),
            float(rng.uniform(*spec.z_range)),
        )
        lo = [min(margin, d / 4) for d in dims]
        source = tuple(float(rng.uniform(lo[i], dims[i] - lo[i])) for i in range(3))
        mic = tuple(float(rng.uniform(lo[i], dims[i] - lo[i])) for i in range(3))
        sep = math.dist(source, mic)
        if sep > 0.2:
            return RoomConfig(
                dims=dims,
                source=source,
                mic=mic,
                absorption=float(rng.uniform(*spec.absorption_range)),
                max_order=spec.max_order,
            )
    raise ValidationError("could not sample a room with separated source and mic")


def sample_augmentation(aug_set: AugmentationSet, rng: np.random.Generator):
    """Draw one concrete transform: uniform over templates, then uniform
    over the chosen template's parameter ranges."""
    if not isinstance(aug_set, AugmentationSet):
        aug_set = AugmentationSet(tuple(aug_set))
    spec = aug_set.specs[int(rng.integers(len(aug_set.specs)))]
    if spec.kind == "identity":
        return Identity()
    if spec.kind == "time_stretch":
        return TimeStretch(rate=float(rng.uniform(*spec.rate_range)))
    if spec.kind == "pitch_shift":
        # nonzero integer steps: {-max..-1, 1..max}
        steps = int(rng.integers(1, spec.max_semitones + 1))
        sign = 1 if rng.integers(2) else -1
        return PitchShift(semitones=sign * steps)
    if spec.kind == "reverb":
        return Reverb(room=_sample_room(spec, rng))
    if spec.kind == "noise":
        source = spec.noise_sources[int(rng.integers(len(spec.noise_sources)))]
        return NoiseInjection(
            snr_db=float(rng.uniform(*spec.snr_range)),
            source=str(source),
            seed=int(rng.integers(0, 2**63)),
            offset_frac=float(rng.uniform(0.0, 1.0)),
        )
    raise ValidationError(f"unknown augmentation kind {spec.kind!r}")


def noise_sources_from_dir(noise_dir) -> tuple:
    """All WAV files under a flat directory, for use as noise sources."""
    paths = sorted(Path(noise_dir).glob("*.wav"))
    if not paths:
        raise ValidationError(f"no .wav files found in {noise_dir}")
    return tuple(str(p) for p in paths)
