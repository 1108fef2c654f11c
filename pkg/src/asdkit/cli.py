"""Command-line entry point.

All commands are driven by a JSON config (defaults are filled in and the
effective config is written next to the outputs, so a run can be
reproduced exactly). Exit codes: 0 success, 2 config error, 3 data
error, 4 numeric failure.

    asdkit synth    --config cfg.json
    asdkit melspec  input.wav -o mel.csv
    asdkit train    --config cfg.json
    asdkit score    --config cfg.json --model-path model.json input.wav ...
    asdkit evaluate --config cfg.json
    asdkit sweep    --config cfg.json

Set ASD_LOG=debug|info|warning to control verbosity.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import data, density, nn, pipelines
from .density import GmmConfig
from .dsp import MelParams, mel_spectrogram, normalize_01
from .errors import AsdError, DataError, InvalidInputError, TrainingDivergedError
from .evaluation import DEFAULT_SWEEP_K, run_experiment, sweep_gmm, sweep_to_csv
from .features import PatchConfig
from .pipelines import PipelineConfig

log = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

DEFAULT_CONFIG = {
    "dataset_root": "benchmark",
    "output_dir": "out",
    "model": "patch_gmm",
    "dsp": {"n_mels": 64, "n_fft": 1024, "hop": 512, "sample_rate": 16000,
            "fmin": 0.0, "fmax": None},
    "patch": {"window_frames": 5, "hop_frames": 3},
    "gmm": None,
    "train": {"batch_size": 128, "epochs": 50, "learning_rate": 0.002, "l2": 1e-5, "seed": 0},
    "pca_retain": None,
    "fvec_root": None,
    "pooling": "mean",
    "seeds": [0, 1, 2, 3, 4],
    "synth": {"n_normal": 60, "n_anomalous": 20, "base_f0": 125.0, "n_harmonics": 12,
              "noise_level": 0.05, "snr_tiers": [-6, 0, 6], "machine_ids": [0], "seed": 0},
    "sweep_k": list(DEFAULT_SWEEP_K),
    "sweep_cov_types": ["diagonal", "full"],
}


def load_config(path: str | None, overrides: dict | None = None) -> dict:
    cfg = json.loads(json.dumps(DEFAULT_CONFIG))  # deep copy
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise InvalidInputError(f"config file {path} not found")
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"config file {path} is not valid JSON: {exc}")
        for key, value in user.items():
            if key not in cfg:
                raise InvalidInputError(f"unknown config key {key!r}")
            if isinstance(cfg[key], dict) and isinstance(value, dict):
                cfg[key].update(value)
            else:
                cfg[key] = value
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg[key] = value
    return cfg


def pipeline_config(cfg: dict) -> PipelineConfig:
    dsp = cfg["dsp"]
    return PipelineConfig(
        model=cfg["model"],
        n_mels=dsp["n_mels"],
        mel=MelParams(n_fft=dsp["n_fft"], hop=dsp["hop"], sample_rate=dsp["sample_rate"],
                      fmin=dsp["fmin"], fmax=dsp["fmax"]),
        patch=PatchConfig(**cfg["patch"]),
        gmm=None if cfg["gmm"] is None else GmmConfig(**cfg["gmm"]),
        train=nn.TrainConfig(**cfg["train"]),
        pooling=cfg["pooling"],
        pca_retain=cfg["pca_retain"],
        fvec_root=cfg["fvec_root"],
    )


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_effective_config(cfg: dict, out_dir: Path) -> None:
    atomic_write(out_dir / "effective_config.json", json.dumps(cfg, indent=2))


def cmd_synth(cfg: dict) -> int:
    synth_cfg = data.SynthConfig(
        **{**cfg["synth"],
           "snr_tiers": tuple(cfg["synth"]["snr_tiers"]),
           "machine_ids": tuple(cfg["synth"]["machine_ids"])}
    )
    root = Path(cfg["dataset_root"])
    manifest = data.generate_benchmark(synth_cfg, root)
    _write_effective_config(cfg, root)
    print(f"wrote {len(manifest.recordings)} recordings under {root}")
    return 0


def cmd_melspec(cfg: dict, wav_path: str, out: str | None, normalize: bool) -> int:
    wav = data.read_wav(wav_path)
    mel = mel_spectrogram(wav, pipeline_config(cfg).mel, n_mels=cfg["dsp"]["n_mels"])
    if normalize:
        mel = normalize_01(mel)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in mel.values:
        writer.writerow([f"{v:.8g}" for v in row])
    if out:
        atomic_write(Path(out), buf.getvalue())
        print(f"wrote {mel.values.shape[0]}x{mel.values.shape[1]} matrix to {out}")
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def _scan(cfg: dict) -> data.DatasetManifest:
    root = Path(cfg["dataset_root"])
    manifest_path = root / "manifest.json"
    if manifest_path.exists():
        return data.load_manifest(manifest_path)
    return data.scan_dataset(root)


def cmd_train(cfg: dict) -> int:
    manifest = _scan(cfg)
    anomalous = [r.path for r in manifest.recordings if r.label == "anomalous"]
    if anomalous:
        raise DataError(
            f"refusing to train: {len(anomalous)} anomalous recordings in the train "
            f"path (e.g. {anomalous[0]}); training uses normal data only"
        )
    pcfg = pipeline_config(cfg)
    out_dir = Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = cfg["train"]["seed"]
    from .evaluation import combinations

    for (machine_type, machine_id, snr_db), recs in sorted(combinations(manifest).items(), key=str):
        seqs = [pipelines.featurize_recording(r, pcfg) for r in recs]
        fitted = pipelines.fit_pipeline(seqs, pcfg, seed)
        tag = f"{machine_type}_id{machine_id}_{snr_db}dB_{pcfg.model}"
        if fitted.net is not None:
            nn.save_model(out_dir / f"{tag}_net.json", fitted.net,
                          train_config=pcfg.train, seed=seed)
        if fitted.gmm is not None:
            density.save_density_model(out_dir / f"{tag}_gmm.json", fitted.gmm,
                                       pca=fitted.pca, config=pcfg.resolved_gmm(seed))
        print(f"trained {tag} on {len(recs)} recordings")
    _write_effective_config(cfg, out_dir)
    return 0


def cmd_score(cfg: dict, model_path: str, inputs: list[str], out: str | None) -> int:
    pcfg = pipeline_config(cfg)
    fitted = pipelines.FittedPipeline(cfg=pcfg)
    if pcfg.model in ("ae", "rnd", "one_lamp", "lamp", "q_lamp"):
        fitted.net = nn.load_model(model_path)
    if pcfg.model in ("patch_gmm", "external_gmm", "one_lamp", "lamp", "q_lamp"):
        gmm_path = model_path
        if pcfg.model in ("one_lamp", "lamp", "q_lamp"):
            gmm_path = model_path.replace("_net.json", "_gmm.json")
        fitted.gmm, fitted.pca = density.load_density_model(gmm_path)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["recording_id", "score"])
    for path in inputs:
        meta = data.RecordingMeta(path=path, machine_type="", machine_id=0,
                                  snr_db=None, label="normal")
        seq = pipelines.featurize_recording(meta, pcfg)
        writer.writerow([path, f"{fitted.score(seq):.8g}"])
    if out:
        atomic_write(Path(out), buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def cmd_evaluate(cfg: dict) -> int:
    manifest = _scan(cfg)
    report = run_experiment(pipeline_config(cfg), manifest, list(cfg["seeds"]))
    out_dir = Path(cfg["output_dir"])
    atomic_write(out_dir / "report.csv", report.to_csv())
    atomic_write(out_dir / "report.json", report.to_json())
    _write_effective_config(cfg, out_dir)
    failed = sum(1 for c in report.cells if c.auc is None)
    print(f"evaluated {len(report.cells)} cells ({failed} failed); report in {out_dir}")
    for row in report.aggregates():
        mark = " [incomplete]" if row["incomplete"] else ""
        mean = "n/a" if row["mean_auc"] is None else f"{row['mean_auc']:.3f}"
        std = "n/a" if row["std_auc"] is None else f"{row['std_auc']:.3f}"
        print(f"  {row['machine_type']} id_{row['machine_id']} {row['snr_db']}dB "
              f"{row['model']}: AUC {mean} +/- {std}{mark}")
    return 0


def cmd_sweep(cfg: dict) -> int:
    manifest = _scan(cfg)
    rows = sweep_gmm(
        pipeline_config(cfg), manifest,
        k_values=cfg["sweep_k"], cov_types=cfg["sweep_cov_types"], seeds=cfg["seeds"],
    )
    out_dir = Path(cfg["output_dir"])
    atomic_write(out_dir / "sweep.csv", sweep_to_csv(rows))
    _write_effective_config(cfg, out_dir)
    print(f"swept {len(rows)} (k, cov_type) settings; table in {out_dir / 'sweep.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asdkit", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="override train seed")
    parser.add_argument("--jobs", type=int, default=1, help="reserved; cells run sequentially")
    parser.add_argument("--model", choices=pipelines.MODEL_TAGS, help="override model tag")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", help="generate the synthetic benchmark tree")
    p = sub.add_parser("melspec", help="write a log-Mel matrix as CSV")
    p.add_argument("wav")
    p.add_argument("-o", "--out")
    p.add_argument("--normalize", action="store_true")
    sub.add_parser("train", help="train models per dataset combination")
    p = sub.add_parser("score", help="score recordings with a persisted model")
    p.add_argument("--model-path", required=True)
    p.add_argument("-o", "--out")
    p.add_argument("inputs", nargs="+")
    sub.add_parser("evaluate", help="run the full multi-seed AUC protocol")
    sub.add_parser("sweep", help="run the GMM hyperparameter sweep")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=os.environ.get("ASD_LOG", "warning").upper())
    try:
        overrides = {"model": args.model}
        cfg = load_config(args.config, overrides)
        if args.seed is not None:
            cfg["train"]["seed"] = args.seed
            cfg["synth"]["seed"] = args.seed
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "melspec":
            return cmd_melspec(cfg, args.wav, args.out, args.normalize)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "score":
            return cmd_score(cfg, args.model_path, args.inputs, args.out)
        if args.command == "evaluate":
            return cmd_evaluate(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        raise InvalidInputError(f"unknown command {args.command}")
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDivergedError, np.linalg.LinAlgError, AsdError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
