"""Anomalous sound detection toolkit.

Raw machine audio -> log-Mel spectrograms -> windowed feature vectors ->
Gaussian-mixture normality models -> recording-level anomaly scores and
AUC evaluation. See the README for the CLI and the evaluation protocol.
"""

from .dsp import (
    MelFilterbank,
    MelParams,
    MelSpectrogram,
    Spectrogram,
    Waveform,
    dft_reference,
    mel_filterbank,
    mel_spectrogram,
    normalize_01,
    stft,
)
from .errors import AsdError, DataError, InvalidInputError, TrainingDivergedError
from .features import (
    FeatureSequence,
    FeatureStats,
    PatchConfig,
    fit_stats,
    read_fvec,
    second_windows,
    sliding_patches,
    standardize,
    write_fvec,
)

__all__ = [
    "AsdError",
    "DataError",
    "FeatureSequence",
    "FeatureStats",
    "InvalidInputError",
    "MelFilterbank",
    "MelParams",
    "MelSpectrogram",
    "PatchConfig",
    "Spectrogram",
    "TrainingDivergedError",
    "Waveform",
    "dft_reference",
    "fit_stats",
    "mel_filterbank",
    "mel_spectrogram",
    "normalize_01",
    "read_fvec",
    "second_windows",
    "sliding_patches",
    "standardize",
    "stft",
    "write_fvec",
]

__version__ = "0.1.0"
