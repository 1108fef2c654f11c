"""Waveform -> log-Mel spectrogram front-end.

All functions here are pure; the returned containers are treated as
immutable. Conventions:

  * STFT frames are Hann-windowed, center reflect-padded, so a signal of
    ``len`` samples yields ``1 + len // hop`` frames.
  * Power spectrogram cells are ``|c_k|**2 / n_fft`` for bins 0..n_fft/2.
  * Mel filters are unnormalized triangles (peak 1) with centers equally
    spaced on the Mel scale ``2595 * log10(1 + f / 700)``.
  * dB conversion is ``10 * log10(power)`` with a 1e-10 floor (-100 dB).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidInputError

DB_FLOOR = 1e-10


@dataclass(frozen=True)
class Waveform:
    """A mono audio signal with amplitudes in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate <= 0:
            raise InvalidInputError(f"sample_rate must be > 0, got {self.sample_rate}")
        if samples.ndim != 1:
            raise InvalidInputError(f"expected 1-D samples, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise InvalidInputError("waveform contains non-finite samples")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class Spectrogram:
    """Power spectrogram, F x T with F = n_fft // 2 + 1."""

    power: np.ndarray
    n_fft: int
    hop: int
    sample_rate: int

    def __post_init__(self):
        if self.power.shape[0] != self.n_fft // 2 + 1:
            raise InvalidInputError(
                f"expected {self.n_fft // 2 + 1} frequency bins, got {self.power.shape[0]}"
            )
        if not np.all(np.isfinite(self.power)) or np.any(self.power < 0):
            raise InvalidInputError("spectrogram power must be finite and non-negative")

    @property
    def n_frames(self) -> int:
        return self.power.shape[1]

    def bin_frequency(self, k: int) -> float:
        return k * self.sample_rate / self.n_fft


@dataclass(frozen=True)
class MelFilterbank:
    """Triangular Mel filters as an (n_mels x F) weight matrix."""

    weights: np.ndarray
    mel_centers: np.ndarray  # n_mels + 2 edge/center frequencies in Hz


@dataclass(frozen=True)
class MelParams:
    n_fft: int = 1024
    hop: int = 512
    sample_rate: int = 16000
    fmin: float = 0.0
    fmax: float | None = None  # defaults to Nyquist
    normalized: bool = False

    def resolved_fmax(self) -> float:
        return self.sample_rate / 2 if self.fmax is None else self.fmax


@dataclass(frozen=True)
class MelSpectrogram:
    """Log-Mel matrix, n_mels x T; dB, or [0, 1] once normalized."""

    values: np.ndarray
    n_mels: int
    params: MelParams = field(default_factory=MelParams)

    def __post_init__(self):
        if self.values.shape[0] != self.n_mels:
            raise InvalidInputError(
                f"expected {self.n_mels} mel rows, got {self.values.shape[0]}"
            )
        if self.params.normalized and (
            self.values.min() < -1e-12 or self.values.max() > 1 + 1e-12
        ):
            raise InvalidInputError("normalized Mel-spectrogram must lie in [0, 1]")

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]

    @property
    def frames_per_second(self) -> float:
        return self.params.sample_rate / self.params.hop


def dft_reference(signal) -> np.ndarray:
    """Direct O(T^2) DFT: c_k = sum_t x[t] (cos(phi) - i sin(phi)), phi = k t/T 2pi.

    Slow on purpose; this is the oracle any faster transform is checked
    against.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.size == 0:
        raise InvalidInputError("cannot transform an empty signal")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("signal contains non-finite values")
    t_len = x.size
    k = np.arange(t_len)[:, None]
    t = np.arange(t_len)[None, :]
    phi = 2.0 * np.pi * k * t / t_len
    return (np.cos(phi) - 1j * np.sin(phi)) @ x


def stft(w: Waveform, n_fft: int = 1024, hop: int = 512) -> Spectrogram:
    """Hann-windowed power STFT with center reflect-padding.

    Frame count is 1 + len // hop; bins above Nyquist are dropped.
    """
    if n_fft < 2 or hop < 1:
        raise InvalidInputError(f"need n_fft >= 2 and hop >= 1, got {n_fft}, {hop}")
    pad = n_fft // 2
    padded = np.pad(w.samples, pad, mode="reflect") if len(w.samples) > 1 else None
    if padded is None or len(padded) < n_fft:
        raise InvalidInputError(
            f"n_fft={n_fft} exceeds padded signal length "
            f"({len(w.samples) + 2 * pad if len(w.samples) > 1 else len(w.samples)})"
        )
    n_frames = 1 + (len(padded) - n_fft) // hop
    window = np.hanning(n_fft)
    starts = np.arange(n_frames) * hop
    frames = np.stack([padded[s : s + n_fft] for s in starts]) * window
    spectrum = np.fft.rfft(frames, axis=1)
    power = (np.abs(spectrum) ** 2 / n_fft).T
    return Spectrogram(power=power, n_fft=n_fft, hop=hop, sample_rate=w.sample_rate)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    sample_rate: int,
    n_fft: int,
    n_mels: int,
    fmin: float = 0.0,
    fmax: float | None = None,
) -> MelFilterbank:
    """Build n_mels unnormalized triangular filters over the rfft bins."""
    nyquist = sample_rate / 2
    if fmax is None:
        fmax = nyquist
    if fmax > nyquist:
        raise InvalidInputError(f"fmax={fmax} exceeds Nyquist {nyquist}")
    if not (0 <= fmin < fmax) or n_mels < 1:
        raise InvalidInputError(
            f"need 0 <= fmin < fmax and n_mels >= 1, got fmin={fmin}, fmax={fmax}, n_mels={n_mels}"
        )
    n_bins = n_fft // 2 + 1
    bin_freqs = np.arange(n_bins) * sample_rate / n_fft
    centers_hz = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))

    weights = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        lo, ctr, hi = centers_hz[m], centers_hz[m + 1], centers_hz[m + 2]
        rising = (bin_freqs - lo) / (ctr - lo)
        falling = (hi - bin_freqs) / (hi - ctr)
        weights[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return MelFilterbank(weights=weights, mel_centers=centers_hz)


def mel_spectrogram(w: Waveform, params: MelParams | None = None, n_mels: int = 64) -> MelSpectrogram:
    """Full front-end: STFT power, Mel re-binning, dB with a -100 dB floor."""
    params = params or MelParams()
    spec = stft(w, n_fft=params.n_fft, hop=params.hop)
    fb = mel_filterbank(
        sample_rate=w.sample_rate,
        n_fft=params.n_fft,
        n_mels=n_mels,
        fmin=params.fmin,
        fmax=params.resolved_fmax(),
    )
    mel_power = fb.weights @ spec.power
    values = 10.0 * np.log10(np.maximum(mel_power, DB_FLOOR))
    params = replace(params, sample_rate=w.sample_rate, normalized=False)
    return MelSpectrogram(values=values, n_mels=n_mels, params=params)


def normalize_01(m: MelSpectrogram) -> MelSpectrogram:
    """Per-recording min-max scaling to [0, 1]; a constant matrix maps to zeros."""
    if m.params.normalized:
        raise InvalidInputError("Mel-spectrogram is already normalized")
    lo, hi = m.values.min(), m.values.max()
    if hi - lo < 1e-300:
        values = np.zeros_like(m.values)
    else:
        values = (m.values - lo) / (hi - lo)
    return MelSpectrogram(
        values=values, n_mels=m.n_mels, params=replace(m.params, normalized=True)
    )
