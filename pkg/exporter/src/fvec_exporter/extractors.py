"""Embedding extractor registry.

Six extractor tags are supported, each with a fixed output dimension:

    vggish 128, l3env 512, l3music 512, musicnn 753,
    densenet121 1024, resnet34 512

Backends are pluggable. The built-in "reference" backend is a
deterministic spectral-summary embedding: it computes a log-power
spectrum per window and projects it with a projection matrix derived
from the extractor tag, so exports are reproducible bit-for-bit across
machines with no model downloads. Heavyweight pretrained backends can
be registered under the same tags; a backend that fails to load is
reported as skipped rather than aborting the batch.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .audio import read_wav, window_starts

REFERENCE_BACKEND = "reference-spectral"
BACKEND_VERSION = "1.0"

EXPECTED_DIMS = {
    "vggish": 128,
    "l3env": 512,
    "l3music": 512,
    "musicnn": 753,
    "densenet121": 1024,
    "resnet34": 512,
}

_N_FFT = 1024


@dataclass(frozen=True)
class ExtractorSpec:
    name: str
    expected_dim: int
    window_s: float = 1.0
    hop_s: float = 0.5
    backend: str = REFERENCE_BACKEND
    backend_version: str = BACKEND_VERSION

    def __post_init__(self):
        if self.expected_dim < 1:
            raise ValueError(f"expected_dim must be positive, got {self.expected_dim}")
        if self.window_s <= 0 or not (0 < self.hop_s <= self.window_s):
            raise ValueError(
                f"need window_s > 0 and 0 < hop_s <= window_s, "
                f"got {self.window_s}, {self.hop_s}"
            )


EXTRACTORS = {
    name: ExtractorSpec(name=name, expected_dim=dim)
    for name, dim in EXPECTED_DIMS.items()
}


def get_spec(name: str) -> ExtractorSpec:
    try:
        return EXTRACTORS[name]
    except KeyError:
        raise KeyError(
            f"unknown extractor {name!r}; expected one of {sorted(EXTRACTORS)}"
        )


def _projection(tag: str, in_dim: int, out_dim: int) -> np.ndarray:
    """Fixed projection matrix derived from the extractor tag.

    The tag is hashed so each extractor defines a distinct but stable
    embedding space, independent of process or platform.
    """
    seed = int.from_bytes(hashlib.sha256(tag.encode()).digest()[:8], "little")
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(out_dim, in_dim))


def _window_spectrum(samples: np.ndarray) -> np.ndarray:
    """Mean log-power spectrum of the Hann-windowed frames of one window."""
    hop = _N_FFT // 2
    if len(samples) < _N_FFT:
        samples = np.pad(samples, (0, _N_FFT - len(samples)))
    frames = [
        samples[s : s + _N_FFT] * np.hanning(_N_FFT)
        for s in range(0, len(samples) - _N_FFT + 1, hop)
    ]
    power = np.abs(np.fft.rfft(np.stack(frames), axis=1)) ** 2 / _N_FFT
    return np.log10(np.maximum(power.mean(axis=0), 1e-10))


def embed_recording(wav_path, spec: ExtractorSpec) -> np.ndarray:
    """Embed one recording: (n_windows, expected_dim) feature matrix."""
    samples, rate = read_wav(wav_path)
    window = int(round(spec.window_s * rate))
    starts = window_starts(len(samples), rate, spec.window_s, spec.hop_s)
    padded = np.pad(samples, (0, max(0, starts[-1] + window - len(samples))), mode="edge")
    spectra = np.stack([_window_spectrum(padded[s : s + window]) for s in starts])
    proj = _projection(spec.name, spectra.shape[1], spec.expected_dim)
    embedded = np.tanh(spectra @ proj.T)
    if embedded.shape[1] != spec.expected_dim:
        raise ValueError(
            f"backend produced dim {embedded.shape[1]}, expected {spec.expected_dim}"
        )
    return embedded
