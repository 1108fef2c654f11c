"""FVEC binary format: the interchange contract with downstream tools.

Layout, bit-exact:

    magic  b"FVEC1"                      5 bytes
    count  u32 little-endian             number of vectors
    dim    u32 little-endian             vector dimension
    data   count * dim float32 LE        vector order (vector 0 first)

A sidecar ``<name>.json`` records the source recording, extractor tag
and window geometry.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"FVEC1"


class FvecFormatError(ValueError):
    """Raised when a file does not follow the FVEC byte layout."""


def write_fvec(
    path: str | Path,
    vectors: np.ndarray,
    *,
    source_path: str,
    extractor_tag: str,
    window_s: float,
    hop_s: float,
) -> None:
    """Write a (count, dim) float array plus its JSON sidecar."""
    vectors = np.asarray(vectors, dtype=np.float32)
    if vectors.ndim != 2:
        raise FvecFormatError(f"vectors must be 2-D (count, dim), got shape {vectors.shape}")
    if not np.all(np.isfinite(vectors)):
        raise FvecFormatError("vectors contain non-finite values")
    count, dim = vectors.shape
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", count, dim))
        fh.write(vectors.astype("<f4").tobytes(order="C"))
    sidecar = {
        "source_path": source_path,
        "extractor_tag": extractor_tag,
        "window_seconds": window_s,
        "hop_seconds": hop_s,
        "count": count,
        "dim": dim,
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2))


def read_fvec(path: str | Path) -> np.ndarray:
    """Read a (count, dim) float32 array, validating the byte layout."""
    raw = Path(path).read_bytes()
    if raw[:5] != MAGIC:
        raise FvecFormatError(f"{path}: bad magic {raw[:5]!r}")
    if len(raw) < 13:
        raise FvecFormatError(f"{path}: truncated header")
    count, dim = struct.unpack("<II", raw[5:13])
    expected = 13 + 4 * count * dim
    if len(raw) != expected:
        raise FvecFormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    return np.frombuffer(raw[13:], dtype="<f4").reshape(count, dim)
