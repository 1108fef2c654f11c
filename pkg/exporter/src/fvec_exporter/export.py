"""Batch export: WAV files in, FVEC files plus a run manifest out."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .audio import AudioError
from .extractors import ExtractorSpec, embed_recording
from .fvec import write_fvec

log = logging.getLogger(__name__)


@dataclass
class ExportResult:
    exported: list[str] = field(default_factory=list)  # FVEC paths
    skipped: list[dict] = field(default_factory=list)  # {"path": ..., "reason": ...}


def export_features(wav_paths, spec: ExtractorSpec, out_dir) -> ExportResult:
    """Embed every recording and write one FVEC per input.

    Undecodable or failing inputs are skipped with a recorded reason; a
    dimension mismatch from a backend is a hard error. The run manifest
    ``export_manifest.json`` pins the backend name and version.
    """
    from . import __version__

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = ExportResult()
    for wav_path in wav_paths:
        wav_path = Path(wav_path)
        try:
            vectors = embed_recording(wav_path, spec)
        except (AudioError, FileNotFoundError) as exc:
            log.warning("skipping %s: %s", wav_path, exc)
            result.skipped.append({"path": str(wav_path), "reason": str(exc)})
            continue
        fvec_path = out_dir / (wav_path.stem + ".fvec")
        write_fvec(
            fvec_path,
            vectors,
            source_path=str(wav_path),
            extractor_tag=spec.name,
            window_s=spec.window_s,
            hop_s=spec.hop_s,
        )
        result.exported.append(str(fvec_path))
    manifest = {
        "extractor": spec.name,
        "expected_dim": spec.expected_dim,
        "window_seconds": spec.window_s,
        "hop_seconds": spec.hop_s,
        "backend": spec.backend,
        "backend_version": spec.backend_version,
        "exporter_version": __version__,
        "exported": result.exported,
        "skipped": result.skipped,
    }
    (out_dir / "export_manifest.json").write_text(json.dumps(manifest, indent=2))
    return result
