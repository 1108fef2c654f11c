"""FVEC feature exporter.

Runs an embedding extractor over WAV recordings with 1 s windows at
0.5 s hop and writes one FVEC file per recording, plus a run manifest
with pinned backend versions. The FVEC byte format is the interchange
contract with downstream density-model tooling.
"""

from .extractors import EXTRACTORS, ExtractorSpec, embed_recording
from .export import ExportResult, export_features
from .fvec import read_fvec, write_fvec

__all__ = [
    "EXTRACTORS",
    "ExtractorSpec",
    "ExportResult",
    "embed_recording",
    "export_features",
    "read_fvec",
    "write_fvec",
]

__version__ = "0.1.0"
