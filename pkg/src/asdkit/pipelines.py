"""Model pipelines: wiring front-end, features, neural nets and GMMs.

A pipeline is fitted on normal-only training recordings and then maps a
recording to one anomaly score. Supported model tags:

    patch_gmm     GMM over raw flattened Mel patches
    ae            autoencoder reconstruction error
    one_lamp      GMM over the 16-dim AE bottleneck
    lamp          GMM over all concatenated encoder activations (112-dim)
    q_lamp        LAMP on a quantile-head autoencoder's encoder
    rnd           random-network-distillation prediction error
    external_gmm  GMM over externally supplied FVEC features
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import nn
from .data import RecordingMeta, read_wav
from .density import GmmConfig, GmmModel, PcaModel, gmm_fit_em, gmm_nll, pca_fit, pca_transform
from .dsp import MelParams, mel_spectrogram, normalize_01
from .errors import DataError, InvalidInputError
from .features import (
    FeatureSequence,
    FeatureStats,
    PatchConfig,
    fit_stats,
    read_fvec,
    sliding_patches,
    standardize,
)

log = logging.getLogger(__name__)

MODEL_TAGS = ("patch_gmm", "ae", "one_lamp", "lamp", "q_lamp", "rnd", "external_gmm")

# One-LAMP/LAMP/Q-LAMP use 42 mixture components; everything else 20.
LAMP_GMM_K = 42
DEFAULT_GMM_K = 20


@dataclass
class PipelineConfig:
    model: str = "patch_gmm"
    n_mels: int = 64
    mel: MelParams = field(default_factory=MelParams)
    patch: PatchConfig = field(default_factory=PatchConfig)
    gmm: GmmConfig | None = None  # None: per-model default k
    train: nn.TrainConfig = field(default_factory=nn.TrainConfig)
    pooling: str = "mean"
    pca_retain: float | None = None  # None: per-model default
    fvec_root: str | None = None  # external_gmm only

    def __post_init__(self):
        if self.model not in MODEL_TAGS:
            raise InvalidInputError(f"unknown model {self.model!r}; expected one of {MODEL_TAGS}")

    def resolved_gmm(self, seed: int) -> GmmConfig:
        if self.gmm is not None:
            return replace(self.gmm, seed=seed)
        k = LAMP_GMM_K if self.model in ("one_lamp", "lamp", "q_lamp") else DEFAULT_GMM_K
        return GmmConfig(k=k, seed=seed)

    def resolved_pca_retain(self) -> float | None:
        if self.pca_retain is not None:
            return self.pca_retain if self.pca_retain < 1.0 or self.pca_retain == 1.0 else None
        # PCA on by default only for ingested external features.
        return 0.98 if self.model == "external_gmm" else None


def featurize_recording(meta: RecordingMeta, cfg: PipelineConfig) -> FeatureSequence:
    """Raw feature vectors for one recording, before any learned transform."""
    if cfg.model == "external_gmm":
        if cfg.fvec_root is None:
            raise InvalidInputError("external_gmm requires fvec_root")
        fvec = Path(cfg.fvec_root) / (Path(meta.path).stem + ".fvec")
        if not fvec.exists():
            raise DataError(f"no FVEC file for {meta.path} at {fvec}")
        return read_fvec(fvec)
    wav = read_wav(meta.path, expected_rate=cfg.mel.sample_rate)
    mel = normalize_01(mel_spectrogram(wav, cfg.mel, n_mels=cfg.n_mels))
    seq = sliding_patches(mel, cfg.patch)
    return FeatureSequence(vectors=seq.vectors, source_id=meta.path, extractor_tag="patch")


@dataclass
class FittedPipeline:
    cfg: PipelineConfig
    net: object | None = None  # AutoEncoder / QuantileHeads / RndPair
    stats: FeatureStats | None = None
    pca: PcaModel | None = None
    gmm: GmmModel | None = None

    def _transform(self, seq: FeatureSequence) -> np.ndarray:
        """Apply the learned feature transform; returns (T', d) vectors."""
        vectors = seq.vectors.T
        if self.cfg.model in ("one_lamp", "lamp", "q_lamp"):
            mode = "one_lamp" if self.cfg.model == "one_lamp" else "lamp"
            vectors = nn.lamp_features(_as_ae(self.net), vectors, mode=mode)
        if self.stats is not None:
            vectors = standardize(
                FeatureSequence(vectors=vectors.T, source_id=seq.source_id), self.stats
            ).vectors.T
        if self.pca is not None:
            vectors = pca_transform(self.pca, vectors)
        return vectors

    def score(self, seq: FeatureSequence) -> float:
        """Pooled anomaly score for one recording's feature sequence."""
        pool = np.mean if self.cfg.pooling == "mean" else np.sum
        if self.cfg.model == "ae":
            return float(pool(nn.mse_score(self.net, seq.vectors.T)))
        if self.cfg.model == "rnd":
            return float(pool(nn.rnd_score(self.net, seq.vectors.T)))
        return float(pool(gmm_nll(self.gmm, self._transform(seq))))


def _as_ae(net) -> nn.AutoEncoder:
    """View any encoder-bearing net as an AutoEncoder for feature extraction."""
    if isinstance(net, nn.AutoEncoder):
        return net
    if isinstance(net, nn.QuantileHeads):
        return nn.AutoEncoder(encoder=net.encoder, decoder=net.heads[0.5])
    raise InvalidInputError(f"{type(net).__name__} has no encoder features")


def fit_pipeline(
    train_seqs: list[FeatureSequence], cfg: PipelineConfig, seed: int
) -> FittedPipeline:
    """Fit the configured model on normal-only training feature sequences."""
    if not train_seqs:
        raise InvalidInputError("cannot fit a pipeline on an empty training set")
    fitted = FittedPipeline(cfg=cfg)
    train_cfg = replace(cfg.train, seed=seed)
    stacked = np.concatenate([s.vectors for s in train_seqs], axis=1).T  # (N, D)

    if cfg.model == "ae":
        fitted.net = nn.AutoEncoder.create(seed=seed)
        nn.train(fitted.net, stacked, train_cfg)
        return fitted
    if cfg.model == "rnd":
        fitted.net = nn.RndPair.create(seed=seed)
        nn.train(fitted.net, stacked, train_cfg)
        return fitted
    if cfg.model in ("one_lamp", "lamp", "q_lamp"):
        if cfg.model == "q_lamp":
            fitted.net = nn.QuantileHeads.create(seed=seed)
        else:
            fitted.net = nn.AutoEncoder.create(seed=seed)
        nn.train(fitted.net, stacked, train_cfg)
        mode = "one_lamp" if cfg.model == "one_lamp" else "lamp"
        features = nn.lamp_features(_as_ae(fitted.net), stacked, mode=mode)
    elif cfg.model == "external_gmm":
        fitted.stats = fit_stats(train_seqs)
        features = np.concatenate(
            [standardize(s, fitted.stats).vectors for s in train_seqs], axis=1
        ).T
    else:  # patch_gmm
        features = stacked

    retain = cfg.resolved_pca_retain()
    if retain is not None:
        fitted.pca = pca_fit(features, retain=retain)
        features = pca_transform(fitted.pca, features)
    fitted.gmm, _ = gmm_fit_em(features, cfg.resolved_gmm(seed))
    return fitted
