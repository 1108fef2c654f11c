"""Interop with the density-model toolkit through the FVEC contract."""

from pathlib import Path

import numpy as np
import pytest

asdkit = pytest.importorskip("asdkit")

from asdkit.data import SynthConfig, generate_benchmark
from asdkit.density import GmmConfig
from asdkit.evaluation import run_experiment
from asdkit.features import read_fvec as primary_read_fvec
from asdkit.pipelines import PipelineConfig

from fvec_exporter import export_features
from fvec_exporter.extractors import get_spec


@pytest.fixture(scope="module")
def exported(tmp_path_factory):
    """Small benchmark plus VGGish-tag FVEC exports for every recording."""
    data_dir = tmp_path_factory.mktemp("data")
    fvec_dir = tmp_path_factory.mktemp("fvec")
    manifest = generate_benchmark(
        SynthConfig(n_normal=10, n_anomalous=4, snr_tiers=(6,), seed=7), data_dir
    )
    export_features([r.path for r in manifest.recordings],
                    get_spec("vggish"), fvec_dir)
    return manifest, fvec_dir


def test_fvec_loads_in_primary_toolkit(exported):
    manifest, fvec_dir = exported
    path = fvec_dir / (Path(manifest.recordings[0].path).stem + ".fvec")
    seq = primary_read_fvec(path)
    assert (seq.count, seq.dim) == (20, 128)
    assert np.all(np.isfinite(seq.vectors))


def test_external_gmm_evaluation_completes(exported):
    manifest, fvec_dir = exported
    cfg = PipelineConfig(
        model="external_gmm",
        fvec_root=str(fvec_dir),
        gmm=GmmConfig(k=3, max_iters=30, seed=0),
    )
    report = run_experiment(cfg, manifest, seeds=[0, 1])
    assert len(report.cells) == 2
    assert all(c.error is None and 0.0 <= c.auc <= 1.0 for c in report.cells)
