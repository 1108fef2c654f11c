"""PCA reduction and Gaussian-mixture normality models.

The GMM is fitted with plain EM: k-means++ seeding on a subsample, then
alternating log-sum-exp E-steps and weighted M-steps with a variance
floor. Anomaly scores are negative log mixture densities, pooled over a
recording's feature vectors.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .features import FeatureSequence

log = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-6
INIT_SUBSAMPLE = 10_000


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # d x D, orthonormal rows, descending variance
    explained_ratio: np.ndarray

    @property
    def dim(self) -> int:
        return self.components.shape[0]


@dataclass
class GmmConfig:
    k: int = 20
    cov_type: str = "diagonal"  # or "full"
    max_iters: int = 200
    tol: float = 1e-4  # relative log-likelihood change
    reg: float = VARIANCE_FLOOR
    seed: int = 0

    def __post_init__(self):
        if self.k < 1 or self.tol <= 0 or self.cov_type not in ("diagonal", "full"):
            raise InvalidInputError(f"invalid GMM config: {self}")


@dataclass(frozen=True)
class GmmModel:
    weights: np.ndarray  # K
    means: np.ndarray  # K x d
    covariances: np.ndarray  # K x d (diagonal) or K x d x d (full)
    cov_type: str

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def pca_fit(data: np.ndarray, retain: float = 0.98) -> PcaModel:
    """Fit PCA by SVD of the centered data, keeping the smallest number of
    components whose cumulative explained variance reaches ``retain``."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise InvalidInputError(f"pca_fit needs an N x D matrix with N >= 2, got {data.shape}")
    if not 0 < retain <= 1:
        raise InvalidInputError(f"retain must be in (0, 1], got {retain}")
    mean = data.mean(axis=0)
    centered = data - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    variances = s**2
    total = variances.sum()
    if total <= 0:
        raise InvalidInputError("data has zero variance; PCA is undefined")
    ratios = variances / total
    cumulative = np.cumsum(ratios)
    d = int(np.searchsorted(cumulative, retain - 1e-12) + 1)
    d = min(d, min(data.shape[0] - 1, data.shape[1]))
    return PcaModel(mean=mean, components=vt[:d], explained_ratio=ratios[:d])


def pca_transform(p: PcaModel, x: np.ndarray) -> np.ndarray:
    """Project vectors (last axis D) onto the principal components."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != p.mean.shape[0]:
        raise InvalidInputError(
            f"dimension mismatch: input {x.shape[-1]}, PCA expects {p.mean.shape[0]}"
        )
    return (x - p.mean) @ p.components.T


def _log_gauss(data: np.ndarray, g: GmmModel) -> np.ndarray:
    """Per-component log N(x | mu_k, Sigma_k); returns (N, K)."""
    n, d = data.shape
    out = np.empty((n, g.k))
    if g.cov_type == "diagonal":
        for k in range(g.k):
            var = g.covariances[k]
            diff = data - g.means[k]
            out[:, k] = -0.5 * (
                d * np.log(2 * np.pi) + np.sum(np.log(var)) + np.sum(diff**2 / var, axis=1)
            )
    else:
        for k in range(g.k):
            cov = g.covariances[k]
            chol = np.linalg.cholesky(cov)
            diff = data - g.means[k]
            y = np.linalg.solve(chol, diff.T)
            logdet = 2.0 * np.sum(np.log(np.diag(chol)))
            out[:, k] = -0.5 * (d * np.log(2 * np.pi) + logdet + np.sum(y**2, axis=0))
    return out


def _log_prob(data: np.ndarray, g: GmmModel) -> np.ndarray:
    """log p(x) per sample via log-sum-exp over components."""
    weighted = _log_gauss(data, g) + np.log(g.weights)
    m = weighted.max(axis=1, keepdims=True)
    return (m + np.log(np.sum(np.exp(weighted - m), axis=1, keepdims=True)))[:, 0]


def _responsibilities(data: np.ndarray, g: GmmModel) -> np.ndarray:
    weighted = _log_gauss(data, g) + np.log(g.weights)
    m = weighted.max(axis=1, keepdims=True)
    p = np.exp(weighted - m)
    return p / p.sum(axis=1, keepdims=True)


def _kmeanspp_centers(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding on a subsample of at most INIT_SUBSAMPLE points."""
    if data.shape[0] > INIT_SUBSAMPLE:
        data = data[rng.choice(data.shape[0], INIT_SUBSAMPLE, replace=False)]
    centers = [data[rng.integers(data.shape[0])]]
    d2 = np.sum((data - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers.append(data[rng.integers(data.shape[0])])
            continue
        idx = rng.choice(data.shape[0], p=d2 / total)
        centers.append(data[idx])
        d2 = np.minimum(d2, np.sum((data - centers[-1]) ** 2, axis=1))
    return np.stack(centers)


def _m_step(data, resp, cov_type, reg) -> GmmModel:
    n, d = data.shape
    nk = resp.sum(axis=0)  # K
    weights = nk / n
    means = (resp.T @ data) / nk[:, None]
    if cov_type == "diagonal":
        covs = np.empty((len(nk), d))
        for k in range(len(nk)):
            diff = data - means[k]
            covs[k] = (resp[:, k] @ (diff**2)) / nk[k] + reg
    else:
        covs = np.empty((len(nk), d, d))
        for k in range(len(nk)):
            diff = data - means[k]
            covs[k] = (diff.T * resp[:, k]) @ diff / nk[k] + reg * np.eye(d)
    return GmmModel(weights=weights, means=means, covariances=covs, cov_type=cov_type)


def gmm_fit_em(data: np.ndarray, cfg: GmmConfig) -> tuple[GmmModel, list[float]]:
    """EM fit; returns the model and the per-iteration mean log-likelihood trace."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < cfg.k:
        raise InvalidInputError(
            f"need at least k={cfg.k} samples, got {data.shape[0] if data.ndim == 2 else data}"
        )
    rng = np.random.default_rng(cfg.seed)
    centers = _kmeanspp_centers(data, cfg.k, rng)
    # One hard-assignment pass for initial responsibilities.
    d2 = np.sum((data[:, None, :] - centers[None]) ** 2, axis=2) if data.shape[0] * cfg.k * data.shape[1] < 5e7 else None
    if d2 is None:
        d2 = np.stack([np.sum((data - c) ** 2, axis=1) for c in centers], axis=1)
    assign = d2.argmin(axis=1)
    resp = np.zeros((data.shape[0], cfg.k))
    resp[np.arange(data.shape[0]), assign] = 1.0
    # Guard against empty initial clusters.
    empty = resp.sum(axis=0) < 1
    if np.any(empty):
        resp[:, empty] = 1e-6
        resp /= resp.sum(axis=1, keepdims=True)
    model = _m_step(data, resp, cfg.cov_type, cfg.reg)

    trace: list[float] = []
    for _ in range(cfg.max_iters):
        resp = _responsibilities(data, model)
        model = _m_step(data, resp, cfg.cov_type, cfg.reg)
        model = _reseed_degenerates(data, model, cfg, rng)
        ll = float(np.mean(_log_prob(data, model)))
        trace.append(ll)
        if len(trace) >= 2:
            prev = trace[-2]
            if abs(ll - prev) <= cfg.tol * max(abs(prev), 1.0):
                break
    return model, trace


def _reseed_degenerates(data, model: GmmModel, cfg: GmmConfig, rng) -> GmmModel:
    """Re-seed components whose weight collapsed below 1e-12."""
    dead = model.weights < 1e-12
    if not np.any(dead):
        return model
    log.warning("re-seeding %d degenerate GMM component(s)", int(dead.sum()))
    weights = model.weights.copy()
    means = model.means.copy()
    covs = model.covariances.copy()
    lp = _log_prob(data, model)
    worst = np.argsort(lp)  # points the model explains worst
    for i, k in enumerate(np.flatnonzero(dead)):
        means[k] = data[worst[i % len(worst)]]
        weights[k] = 1.0 / data.shape[0]
        if model.cov_type == "diagonal":
            covs[k] = data.var(axis=0) + cfg.reg
        else:
            covs[k] = np.diag(data.var(axis=0) + cfg.reg)
    weights /= weights.sum()
    return GmmModel(weights=weights, means=means, covariances=covs, cov_type=model.cov_type)


def gmm_nll(g: GmmModel, x) -> float:
    """Weighted negative log-likelihood of a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("cannot score non-finite input")
    if x.shape[-1] != g.dim:
        raise InvalidInputError(f"dimension mismatch: input {x.shape[-1]}, model {g.dim}")
    squeeze = x.ndim == 1
    batch = x[None, :] if squeeze else x
    nll = -_log_prob(batch, g)
    return float(nll[0]) if squeeze else nll


def score_sequence(g: GmmModel, x: FeatureSequence, pooling: str = "mean") -> float:
    """Pool per-vector NLLs over a recording; mean by default, sum optional."""
    if pooling not in ("mean", "sum"):
        raise InvalidInputError(f"unknown pooling {pooling!r}")
    nll = gmm_nll(g, x.vectors.T)
    return float(nll.mean()) if pooling == "mean" else float(nll.sum())


# ---------------------------------------------------------------------------
# Persistence


def save_density_model(path, g: GmmModel, pca: PcaModel | None = None,
                       config: GmmConfig | None = None):
    doc = {
        "cov_type": g.cov_type,
        "k": g.k,
        "d": g.dim,
        "weights": g.weights.tolist(),
        "means": g.means.tolist(),
        "covariances": g.covariances.tolist(),
        "pca": None
        if pca is None
        else {
            "mean": pca.mean.tolist(),
            "components": pca.components.tolist(),
            "explained_ratio": pca.explained_ratio.tolist(),
        },
        "seed": config.seed if config else None,
        "config": asdict(config) if config else None,
    }
    Path(path).write_text(json.dumps(doc))


def load_density_model(path) -> tuple[GmmModel, PcaModel | None]:
    doc = json.loads(Path(path).read_text())
    g = GmmModel(
        weights=np.asarray(doc["weights"], dtype=np.float64),
        means=np.asarray(doc["means"], dtype=np.float64),
        covariances=np.asarray(doc["covariances"], dtype=np.float64),
        cov_type=doc["cov_type"],
    )
    pca = None
    if doc.get("pca"):
        pca = PcaModel(
            mean=np.asarray(doc["pca"]["mean"], dtype=np.float64),
            components=np.asarray(doc["pca"]["components"], dtype=np.float64),
            explained_ratio=np.asarray(doc["pca"]["explained_ratio"], dtype=np.float64),
        )
    return g, pca
