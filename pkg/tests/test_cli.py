import json
import math
from pathlib import Path

import numpy as np
import pytest

from asdkit import cli
from asdkit.data import Waveform, write_wav


def write_config(path: Path, **overrides) -> str:
    """A small, fast config suitable for CLI round trips in tests."""
    cfg = {
        "synth": {"n_normal": 8, "n_anomalous": 3, "snr_tiers": [6], "seed": 5},
        "patch": {"window_frames": 5, "hop_frames": 8},
        "gmm": {"k": 3, "max_iters": 20, "seed": 0},
        "train": {"batch_size": 128, "epochs": 2, "learning_rate": 0.002,
                  "l2": 1e-5, "seed": 0},
        "seeds": [0, 1],
        "sweep_k": [1, 2],
        "sweep_cov_types": ["diagonal"],
    }
    cfg.update(overrides)
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.fixture(scope="module")
def bench_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_bench")
    cfg = write_config(root / "cfg.json", dataset_root=str(root / "data"))
    assert cli.main(["--config", cfg, "synth"]) == 0
    return root


class TestConfig:
    def test_unknown_key_rejected(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text('{"no_such_option": 1}')
        assert cli.main(["--config", str(path), "synth"]) == 2
        assert "no_such_option" in capsys.readouterr().err

    def test_malformed_json_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert cli.main(["--config", str(path), "synth"]) == 2

    def test_missing_config_file(self, tmp_path):
        assert cli.main(["--config", str(tmp_path / "nope.json"), "synth"]) == 2


class TestSynth:
    def test_writes_manifest_and_effective_config(self, bench_dir):
        data_dir = bench_dir / "data"
        assert (data_dir / "manifest.json").exists()
        assert (data_dir / "effective_config.json").exists()
        manifest = json.loads((data_dir / "manifest.json").read_text())
        assert len(manifest["recordings"]) == 11

    def test_rerun_is_byte_identical(self, bench_dir, tmp_path):
        cfg = write_config(tmp_path / "cfg.json", dataset_root=str(tmp_path / "data"))
        assert cli.main(["--config", cfg, "synth"]) == 0
        old = sorted((bench_dir / "data").rglob("*.wav"))
        new = sorted((tmp_path / "data").rglob("*.wav"))
        assert [p.name for p in old] == [p.name for p in new]
        for a, b in zip(old, new):
            assert a.read_bytes() == b.read_bytes()


class TestMelspec:
    def test_shape_of_csv(self, bench_dir, tmp_path):
        wav = next((bench_dir / "data").rglob("*.wav"))
        out = tmp_path / "mel.csv"
        assert cli.main(["melspec", str(wav), "-o", str(out)]) == 0
        rows = out.read_text().strip().split("\n")
        assert len(rows) == 64
        assert all(len(r.split(",")) == 313 for r in rows)

    def test_silence_is_constant_floor(self, tmp_path):
        wav_path = tmp_path / "silence.wav"
        write_wav(wav_path, Waveform(samples=np.zeros(160000), sample_rate=16000))
        out = tmp_path / "mel.csv"
        assert cli.main(["melspec", str(wav_path), "-o", str(out)]) == 0
        values = {float(v) for row in out.read_text().split() for v in row.split(",")}
        assert values == {-100.0}

    def test_missing_wav_is_data_error(self, tmp_path):
        assert cli.main(["melspec", str(tmp_path / "missing.wav")]) == 3


class TestTrain:
    def test_refuses_anomalous_training_data(self, bench_dir, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "cfg.json",
            dataset_root=str(bench_dir / "data"),
            output_dir=str(tmp_path / "out"),
        )
        assert cli.main(["--config", cfg, "train"]) == 3
        assert "anomalous" in capsys.readouterr().err

    def train_normal_only(self, bench_dir, tmp_path):
        # Restrict the scan to the normal/ subtree by rebuilding a manifest
        # without the abnormal recordings.
        src = json.loads((bench_dir / "data" / "manifest.json").read_text())
        src["recordings"] = [r for r in src["recordings"] if r["label"] == "normal"]
        train_root = tmp_path / "data"
        train_root.mkdir()
        (train_root / "manifest.json").write_text(json.dumps(src))
        cfg = write_config(
            tmp_path / "cfg.json",
            dataset_root=str(train_root),
            output_dir=str(tmp_path / "out"),
        )
        assert cli.main(["--config", cfg, "train"]) == 0
        models = list((tmp_path / "out").glob("*_gmm.json"))
        assert len(models) == 1
        return models[0]

    def test_trains_on_normal_only_tree(self, bench_dir, tmp_path):
        self.train_normal_only(bench_dir, tmp_path)

    def test_score_outputs_one_row_per_input(self, bench_dir, tmp_path):
        model = self.train_normal_only(bench_dir, tmp_path)
        wavs = [str(p) for p in sorted((bench_dir / "data").rglob("*.wav"))[:3]]
        out = tmp_path / "scores.csv"
        cfg = write_config(tmp_path / "score_cfg.json")
        code = cli.main(["--config", cfg, "score", "--model-path", str(model),
                         "-o", str(out), *wavs])
        assert code == 0
        rows = out.read_text().strip().split("\n")
        assert rows[0] == "recording_id,score"
        assert len(rows) == 4
        assert all(math.isfinite(float(r.rsplit(",", 1)[1])) for r in rows[1:])


class TestEvaluate:
    def run(self, bench_dir, out_dir):
        out_dir.mkdir(parents=True, exist_ok=True)
        cfg = write_config(
            out_dir / "cfg.json",
            dataset_root=str(bench_dir / "data"),
            output_dir=str(out_dir / "out"),
        )
        assert cli.main(["--config", cfg, "evaluate"]) == 0
        return (out_dir / "out" / "report.csv").read_bytes()

    def test_report_files_written(self, bench_dir, tmp_path):
        self.run(bench_dir, tmp_path)
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert len(report["cells"]) == 2  # 1 combination x 2 seeds
        assert all(0.0 <= c["auc"] <= 1.0 for c in report["cells"])

    def test_rerun_is_byte_identical(self, bench_dir, tmp_path):
        first = self.run(bench_dir, tmp_path / "a")
        second = self.run(bench_dir, tmp_path / "b")
        assert first == second


class TestSweep:
    def test_sweep_table(self, bench_dir, tmp_path):
        cfg = write_config(
            tmp_path / "cfg.json",
            dataset_root=str(bench_dir / "data"),
            output_dir=str(tmp_path / "out"),
        )
        assert cli.main(["--config", cfg, "sweep"]) == 0
        rows = (tmp_path / "out" / "sweep.csv").read_text().strip().split("\n")
        assert len(rows) == 3  # header + 2 k values x 1 cov type

    def test_model_override_flag(self, bench_dir, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "cfg.json",
            dataset_root=str(bench_dir / "data"),
            output_dir=str(tmp_path / "out"),
        )
        assert cli.main(["--config", cfg, "--model", "ae", "evaluate"]) == 0
        effective = json.loads((tmp_path / "out" / "effective_config.json").read_text())
        assert effective["model"] == "ae"
