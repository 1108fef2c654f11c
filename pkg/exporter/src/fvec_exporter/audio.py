"""Minimal WAV decoding for the exporter (16-bit PCM mono)."""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np


class AudioError(ValueError):
    """Raised when a recording cannot be decoded."""


def read_wav(path: str | Path) -> tuple[np.ndarray, int]:
    """Decode a 16-bit PCM mono WAV into float samples in [-1, 1)."""
    try:
        with wave.open(str(path), "rb") as fh:
            if fh.getnchannels() != 1:
                raise AudioError(f"{path}: expected mono, got {fh.getnchannels()} channels")
            if fh.getsampwidth() != 2:
                raise AudioError(f"{path}: expected 16-bit PCM, got {8 * fh.getsampwidth()} bits")
            rate = fh.getframerate()
            raw = fh.readframes(fh.getnframes())
    except wave.Error as exc:
        raise AudioError(f"{path}: not a valid WAV file ({exc})")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return samples, rate


def window_starts(n_samples: int, rate: int, window_s: float, hop_s: float) -> list[int]:
    """Sample offsets of every window starting before the recording ends."""
    hop = int(round(hop_s * rate))
    return list(range(0, n_samples, hop))
