"""Evaluation protocol: balanced splits, multi-seed AUC runs, GMM sweep.

Per (machine_type, machine_id, snr) combination and per seed: draw a
balanced split (test normals sampled to match the anomaly count, train
on the remaining normals), fit the pipeline, score the test set, and
compute rank-based ROC-AUC with midrank tie handling. Per-cell seeds are
a stable hash of (master_seed, machine, id, snr, model), so adding
combinations never perturbs existing cells.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import dataclass

import numpy as np

from .data import DatasetManifest, RecordingMeta
from .errors import AsdError, InvalidInputError
from .pipelines import PipelineConfig, featurize_recording, fit_pipeline

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScoredRecording:
    recording_id: str
    label: int  # 0 normal, 1 anomalous
    score: float

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise InvalidInputError(f"non-finite score for {self.recording_id}")
        if self.label not in (0, 1):
            raise InvalidInputError(f"label must be 0 or 1, got {self.label}")


@dataclass(frozen=True)
class EvalSplit:
    train_ids: tuple  # normal-only
    test_normal_ids: tuple
    test_anomalous_ids: tuple
    seed: int


@dataclass
class EvalCell:
    machine_type: str
    machine_id: int
    snr_db: int | None
    model: str
    seed: int
    auc: float | None
    error: str | None = None


@dataclass
class EvalReport:
    cells: list[EvalCell]

    def aggregates(self) -> list[dict]:
        """Mean +/- std AUC per (machine_type, machine_id, snr_db, model)."""
        groups: dict[tuple, list[float]] = {}
        incomplete: set[tuple] = set()
        for c in self.cells:
            key = (c.machine_type, c.machine_id, c.snr_db, c.model)
            if c.auc is None:
                incomplete.add(key)
                groups.setdefault(key, [])
            else:
                groups.setdefault(key, []).append(c.auc)
        rows = []
        for key in sorted(groups, key=str):
            aucs = groups[key]
            rows.append(
                {
                    "machine_type": key[0],
                    "machine_id": key[1],
                    "snr_db": key[2],
                    "model": key[3],
                    "n_seeds": len(aucs),
                    "mean_auc": float(np.mean(aucs)) if aucs else None,
                    "std_auc": float(np.std(aucs)) if aucs else None,
                    "incomplete": key in incomplete,
                }
            )
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["machine_type", "machine_id", "snr_db", "model", "seed", "auc"])
        for c in self.cells:
            writer.writerow(
                [c.machine_type, c.machine_id, c.snr_db, c.model, c.seed,
                 "" if c.auc is None else f"{c.auc:.6f}"]
            )
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "cells": [vars(c) for c in self.cells],
                "aggregates": self.aggregates(),
            },
            indent=2,
        )


def roc_auc(scored: list[ScoredRecording]) -> float:
    """Rank-based AUC with midranks: P(anomalous score > normal score), ties 1/2."""
    scores = np.array([s.score for s in scored], dtype=np.float64)
    labels = np.array([s.label for s in scored])
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise InvalidInputError("roc_auc needs at least one recording of each label")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def cell_seed(master_seed: int, machine_type: str, machine_id, snr_db, model: str) -> int:
    """Stable per-cell seed substream."""
    key = f"{master_seed}:{machine_type}:{machine_id}:{snr_db}:{model}"
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little")


def make_split(recordings: list[RecordingMeta], seed: int) -> EvalSplit:
    """Balanced test split: all anomalies plus an equal seeded sample of normals."""
    normals = [r.path for r in recordings if r.label == "normal"]
    anomalies = [r.path for r in recordings if r.label == "anomalous"]
    if len(anomalies) < 2:
        raise InvalidInputError(f"need at least 2 anomalous recordings, got {len(anomalies)}")
    if len(normals) < 2 * len(anomalies):
        raise InvalidInputError(
            f"need at least {2 * len(anomalies)} normals for a balanced split, got {len(normals)}"
        )
    rng = np.random.default_rng(seed)
    test_idx = rng.choice(len(normals), size=len(anomalies), replace=False)
    test_set = set(test_idx.tolist())
    train = tuple(p for i, p in enumerate(normals) if i not in test_set)
    test_normal = tuple(normals[i] for i in sorted(test_set))
    return EvalSplit(
        train_ids=train,
        test_normal_ids=test_normal,
        test_anomalous_ids=tuple(anomalies),
        seed=seed,
    )


def _run_cell(recordings, cfg: PipelineConfig, seed: int) -> float:
    by_path = {r.path: r for r in recordings}
    split = make_split(recordings, seed)
    train_seqs = [featurize_recording(by_path[p], cfg) for p in split.train_ids]
    fitted = fit_pipeline(train_seqs, cfg, seed)
    scored = []
    for label, paths in ((0, split.test_normal_ids), (1, split.test_anomalous_ids)):
        for p in paths:
            seq = featurize_recording(by_path[p], cfg)
            scored.append(ScoredRecording(recording_id=p, label=label, score=fitted.score(seq)))
    return roc_auc(scored)


def combinations(manifest: DatasetManifest) -> dict[tuple, list[RecordingMeta]]:
    groups: dict[tuple, list[RecordingMeta]] = {}
    for r in manifest.recordings:
        groups.setdefault((r.machine_type, r.machine_id, r.snr_db), []).append(r)
    return groups


def run_experiment(cfg: PipelineConfig, manifest: DatasetManifest, seeds: list[int]) -> EvalReport:
    """Full protocol: every (combination x seed) cell, aggregated per combination.

    A failing cell is recorded with its error instead of aborting the run.
    """
    cells = []
    for (machine_type, machine_id, snr_db), recs in sorted(
        combinations(manifest).items(), key=str
    ):
        for seed in seeds:
            sub = cell_seed(seed, machine_type, machine_id, snr_db, cfg.model)
            cell = EvalCell(machine_type, machine_id, snr_db, cfg.model, seed, auc=None)
            try:
                cell.auc = _run_cell(recs, cfg, sub)
            except (AsdError, np.linalg.LinAlgError) as exc:
                cell.error = f"{type(exc).__name__}: {exc}"
                log.warning("cell %s failed: %s", (machine_type, machine_id, snr_db, seed), exc)
            cells.append(cell)
    return EvalReport(cells=cells)


DEFAULT_SWEEP_K = (1, 4, 8, 12, 16, 20, 24, 28)


def sweep_gmm(
    cfg: PipelineConfig,
    manifest: DatasetManifest,
    k_values=DEFAULT_SWEEP_K,
    cov_types=("diagonal", "full"),
    seeds=(0,),
) -> list[dict]:
    """Average AUC per (k, cov_type) over all combinations and seeds.

    Iteration/tolerance settings come from cfg.gmm when present; only k
    and cov_type are swept.
    """
    from dataclasses import replace
    from .density import GmmConfig

    base = cfg.gmm if cfg.gmm is not None else GmmConfig()
    rows = []
    for k in k_values:
        for cov_type in cov_types:
            gmm_cfg = replace(base, k=k, cov_type=cov_type)
            report = run_experiment(replace(cfg, gmm=gmm_cfg), manifest, list(seeds))
            aucs = [c.auc for c in report.cells if c.auc is not None]
            rows.append(
                {
                    "k": k,
                    "cov_type": cov_type,
                    "mean_auc": float(np.mean(aucs)) if aucs else None,
                    "std_auc": float(np.std(aucs)) if aucs else None,
                    "n_cells": len(report.cells),
                    "n_failed": sum(1 for c in report.cells if c.auc is None),
                }
            )
    return rows


def sweep_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["k", "cov_type", "mean_auc", "std_auc"])
    for r in rows:
        writer.writerow(
            [r["k"], r["cov_type"],
             "" if r["mean_auc"] is None else f"{r['mean_auc']:.6f}",
             "" if r["std_auc"] is None else f"{r['std_auc']:.6f}"]
        )
    return buf.getvalue()
