"""Sliding-window featurization and the FVEC interchange format.

A Mel-spectrogram (n_mels x T) becomes a FeatureSequence (D x T') either
by flattening small n-frame patches (D = n_mels * n) or by handing whole
1-second windows to an external extractor. Windows start every ``hop``
frames; the tail is edge-replicated so no spectrogram column is
discarded.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dsp import MelSpectrogram
from .errors import DataError, InvalidInputError

FVEC_MAGIC = b"FVEC1"
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class PatchConfig:
    window_frames: int = 5
    hop_frames: int = 3
    flatten: bool = True

    def __post_init__(self):
        if self.window_frames < 1 or self.hop_frames < 1:
            raise InvalidInputError(
                f"window_frames and hop_frames must be >= 1, got "
                f"{self.window_frames}, {self.hop_frames}"
            )


@dataclass(frozen=True)
class FeatureSequence:
    """D x T' matrix of per-window feature vectors."""

    vectors: np.ndarray
    source_id: str = ""
    extractor_tag: str = ""

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        object.__setattr__(self, "vectors", v)
        if v.ndim != 2 or v.shape[1] < 1:
            raise InvalidInputError(f"expected a D x T' matrix with T' >= 1, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("feature vectors must be finite")

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    @property
    def count(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class FeatureStats:
    mean: np.ndarray
    std: np.ndarray  # per-dimension, floored at STD_FLOOR


def window_starts(total: int, window: int, hop: int) -> np.ndarray:
    """Start indices 0, hop, 2*hop, ... < total; the caller pads the tail."""
    return np.arange(0, total, hop)


def _pad_right(values: np.ndarray, needed: int) -> np.ndarray:
    """Edge-replicate the last column so index ``needed - 1`` exists."""
    if values.shape[1] >= needed:
        return values
    return np.pad(values, ((0, 0), (0, needed - values.shape[1])), mode="edge")


def patch_windows(m: MelSpectrogram, cfg: PatchConfig) -> np.ndarray:
    """All n-frame windows every h frames as a (T', n_mels, n) array.

    T' = ceil((T - n) / h) + 1; the final windows are filled by repeating
    the last column so every original column is covered.
    """
    if not m.params.normalized:
        raise InvalidInputError("patch extraction expects a normalized Mel-spectrogram")
    n, h = cfg.window_frames, cfg.hop_frames
    t = m.n_frames
    if n > t:
        raise InvalidInputError(f"window of {n} frames exceeds spectrogram length {t}")
    n_windows = math.ceil((t - n) / h) + 1
    padded = _pad_right(m.values, (n_windows - 1) * h + n)
    return np.stack([padded[:, i * h : i * h + n] for i in range(n_windows)])


def flatten_patch(patch: np.ndarray) -> np.ndarray:
    """Flatten an n_mels x n window frequency-fastest (column-major)."""
    return patch.reshape(-1, order="F")


def unflatten_patch(vector: np.ndarray, n_mels: int) -> np.ndarray:
    """Inverse of flatten_patch."""
    return vector.reshape(n_mels, -1, order="F")


def sliding_patches(m: MelSpectrogram, cfg: PatchConfig) -> FeatureSequence:
    """Extract n-frame patches every h frames as D = n_mels * n vectors."""
    windows = patch_windows(m, cfg)
    vectors = np.stack([flatten_patch(p) for p in windows], axis=1)
    return FeatureSequence(vectors=vectors, extractor_tag="patch")


def second_windows(m: MelSpectrogram, window_s: float, hop_s: float) -> list[MelSpectrogram]:
    """Cut the spectrogram into window_s-long slices every hop_s seconds.

    Windows start at every multiple of hop_s before the end of the
    recording, so a 10 s recording at 1 s / 0.5 s yields exactly 20
    slices; the tail slice is edge-padded.
    """
    if window_s <= 0 or not (0 < hop_s <= window_s):
        raise InvalidInputError(
            f"need window_s > 0 and 0 < hop_s <= window_s, got {window_s}, {hop_s}"
        )
    fps = m.frames_per_second
    win = int(round(window_s * fps))
    hop = int(round(hop_s * fps))
    if win > m.n_frames:
        raise InvalidInputError(
            f"{window_s} s window ({win} frames) exceeds recording length ({m.n_frames} frames)"
        )
    starts = window_starts(m.n_frames, win, hop)
    padded = _pad_right(m.values, int(starts[-1]) + win)
    return [
        MelSpectrogram(values=padded[:, s : s + win], n_mels=m.n_mels, params=m.params)
        for s in starts
    ]


def fit_stats(train: list[FeatureSequence]) -> FeatureStats:
    """Per-dimension mean/std over all vectors of all training sequences."""
    if not train:
        raise InvalidInputError("fit_stats needs at least one feature sequence")
    stacked = np.concatenate([seq.vectors for seq in train], axis=1)
    if stacked.shape[1] < 2:
        raise InvalidInputError("fit_stats needs at least 2 vectors in total")
    mean = stacked.mean(axis=1)
    std = np.maximum(stacked.std(axis=1), STD_FLOOR)
    return FeatureStats(mean=mean, std=std)


def standardize(x: FeatureSequence, s: FeatureStats) -> FeatureSequence:
    if x.dim != s.mean.shape[0]:
        raise InvalidInputError(f"dimension mismatch: features {x.dim}, stats {s.mean.shape[0]}")
    vectors = (x.vectors - s.mean[:, None]) / s.std[:, None]
    return FeatureSequence(vectors=vectors, source_id=x.source_id, extractor_tag=x.extractor_tag)


def write_fvec(path, seq: FeatureSequence, manifest: dict | None = None) -> None:
    """Write vectors as FVEC: magic, u32 count, u32 dim, float32 LE values.

    Vectors are stored in sequence order. An optional sidecar JSON
    manifest is written next to the file.
    """
    path = Path(path)
    payload = seq.vectors.T.astype("<f4").tobytes()
    header = FVEC_MAGIC + struct.pack("<II", seq.count, seq.dim)
    path.write_bytes(header + payload)
    if manifest is not None:
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(manifest, indent=2))


def read_fvec(path) -> FeatureSequence:
    """Load an FVEC file, validating magic and finiteness."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < len(FVEC_MAGIC) + 8 or not blob.startswith(FVEC_MAGIC):
        raise DataError(f"{path}: not an FVEC file (bad magic)")
    count, dim = struct.unpack_from("<II", blob, len(FVEC_MAGIC))
    expected = len(FVEC_MAGIC) + 8 + 4 * count * dim
    if len(blob) != expected:
        raise DataError(f"{path}: expected {expected} bytes for {count}x{dim}, got {len(blob)}")
    values = np.frombuffer(blob, dtype="<f4", offset=len(FVEC_MAGIC) + 8)
    vectors = values.astype(np.float64).reshape(count, dim).T
    if not np.all(np.isfinite(vectors)):
        raise DataError(f"{path}: contains non-finite values")
    return FeatureSequence(vectors=vectors, source_id=path.stem)
