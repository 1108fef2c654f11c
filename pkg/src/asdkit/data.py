"""Dataset ingestion and the synthetic desk-scale benchmark.

Directory layout (MIMII-style):

    <root>/<snr>dB/<machine_type>/id_<k>/{normal|abnormal}/<name>.wav

WAV files are mono PCM16 little-endian RIFF. The synthetic generator
produces harmonic "machine" tones with seeded anomalies (pitch shift,
clicks, harmonic dropout, amplitude modulation) mixed against filtered
white noise at the requested SNR tiers, so the full evaluation protocol
runs without the real dataset.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import uuid
import wave
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .dsp import Waveform
from .errors import DataError, InvalidInputError

log = logging.getLogger(__name__)

ANOMALY_KINDS = ("pitch_shift", "transient_clicks", "harmonic_dropout", "amplitude_modulation")


@dataclass(frozen=True)
class RecordingMeta:
    path: str
    machine_type: str
    machine_id: int
    snr_db: int | None
    label: str  # "normal" | "anomalous"


@dataclass(frozen=True)
class DatasetManifest:
    recordings: list[RecordingMeta]
    sample_rate: int = 16000
    duration: float = 10.0


@dataclass(frozen=True)
class SynthConfig:
    n_normal: int = 60
    n_anomalous: int = 20
    base_f0: float = 125.0
    n_harmonics: int = 12
    noise_level: float = 0.05  # white-noise RMS relative to tone RMS
    anomaly_kinds: tuple = ANOMALY_KINDS
    snr_tiers: tuple = (-6, 0, 6)
    machine_ids: tuple = (0,)
    sample_rate: int = 16000
    duration: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.n_normal < 1 or self.n_anomalous < 1:
            raise InvalidInputError("need at least one normal and one anomalous recording")
        if self.base_f0 * self.n_harmonics >= self.sample_rate / 2:
            raise InvalidInputError(
                f"top harmonic {self.base_f0 * self.n_harmonics} Hz reaches Nyquist"
            )


def read_wav(path, expected_rate: int | None = None) -> Waveform:
    """Decode a mono PCM16 RIFF file; samples scaled to [-1, 1] by /32768."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getnchannels() != 1:
                raise DataError(f"{path}: expected mono, got {wf.getnchannels()} channels")
            if wf.getsampwidth() != 2:
                raise DataError(f"{path}: expected 16-bit PCM, got {8 * wf.getsampwidth()}-bit")
            rate = wf.getframerate()
            if expected_rate is not None and rate != expected_rate:
                raise DataError(f"{path}: sample rate {rate}, expected {expected_rate}")
            raw = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        raise DataError(f"{path}: malformed WAV ({exc})") from exc
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(samples=samples, sample_rate=rate)


def write_wav(path, w: Waveform) -> None:
    """Encode as mono PCM16; amplitudes are clipped to [-1, 1) before quantizing."""
    clipped = np.clip(w.samples, -1.0, 32767 / 32768)
    pcm = np.round(clipped * 32768.0).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(w.sample_rate)
        wf.writeframes(pcm.tobytes())


_ID_DIR = re.compile(r"^id_(\d+)$")
_SNR_DIR = re.compile(r"^(-?\d+)dB$")


def scan_dataset(root) -> DatasetManifest:
    """Walk the fixed layout and label recordings from their directory names."""
    root = Path(root)
    if not root.exists():
        raise DataError(f"dataset root {root} does not exist")
    recordings = []
    for snr_dir in sorted(root.iterdir()):
        m_snr = _SNR_DIR.match(snr_dir.name)
        if not snr_dir.is_dir() or not m_snr:
            log.warning("ignoring unexpected entry %s", snr_dir)
            continue
        snr = int(m_snr.group(1))
        for machine_dir in sorted(snr_dir.iterdir()):
            if not machine_dir.is_dir():
                log.warning("ignoring unexpected entry %s", machine_dir)
                continue
            for id_dir in sorted(machine_dir.iterdir()):
                m_id = _ID_DIR.match(id_dir.name)
                if not id_dir.is_dir() or not m_id:
                    log.warning("ignoring unexpected entry %s", id_dir)
                    continue
                for label_dir, label in (("normal", "normal"), ("abnormal", "anomalous")):
                    sub = id_dir / label_dir
                    if not sub.is_dir():
                        continue
                    for wav_path in sorted(sub.glob("*.wav")):
                        recordings.append(
                            RecordingMeta(
                                path=str(wav_path),
                                machine_type=machine_dir.name,
                                machine_id=int(m_id.group(1)),
                                snr_db=snr,
                                label=label,
                            )
                        )
    if not recordings:
        raise DataError(f"no recordings found under {root}")
    return DatasetManifest(recordings=recordings)


def save_manifest(path, manifest: DatasetManifest) -> None:
    doc = {
        "sample_rate": manifest.sample_rate,
        "duration": manifest.duration,
        "recordings": [asdict(r) for r in manifest.recordings],
    }
    Path(path).write_text(json.dumps(doc, indent=2))


def load_manifest(path) -> DatasetManifest:
    doc = json.loads(Path(path).read_text())
    return DatasetManifest(
        recordings=[RecordingMeta(**r) for r in doc["recordings"]],
        sample_rate=doc["sample_rate"],
        duration=doc["duration"],
    )


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x**2)))


def mix_at_snr(signal: Waveform, noise: Waveform, snr_db: float) -> Waveform:
    """signal + g * noise with g chosen so the RMS ratio hits snr_db exactly."""
    if len(signal.samples) != len(noise.samples) or signal.sample_rate != noise.sample_rate:
        raise InvalidInputError("signal and noise must share length and sample rate")
    rms_s, rms_n = _rms(signal.samples), _rms(noise.samples)
    if rms_s <= 0 or rms_n <= 0:
        raise InvalidInputError("signal and noise must have non-zero RMS")
    gain = rms_s / (rms_n * 10.0 ** (snr_db / 20.0))
    return Waveform(samples=signal.samples + gain * noise.samples, sample_rate=signal.sample_rate)


def _substream(*parts) -> np.random.Generator:
    """Independent generator derived from a stable hash of the given parts."""
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def synth_recording(cfg: SynthConfig, anomalous: bool, seed: int) -> Waveform:
    """One harmonic-tone recording; anomalous runs get one seeded fault."""
    rng = _substream("synth", cfg.seed, seed, anomalous)
    n = int(round(cfg.duration * cfg.sample_rate))
    t = np.arange(n) / cfg.sample_rate
    f0 = cfg.base_f0
    kinds = list(cfg.anomaly_kinds)
    kind = kinds[rng.integers(len(kinds))] if anomalous else None
    if kind == "pitch_shift":
        f0 = f0 * rng.uniform(1.05, 1.2)

    amplitudes = np.array([1.0 / k for k in range(1, cfg.n_harmonics + 1)])
    harmonics = [amp * np.sin(2 * np.pi * k * f0 * t + rng.uniform(0, 2 * np.pi))
                 for k, amp in zip(range(1, cfg.n_harmonics + 1), amplitudes)]

    if kind == "harmonic_dropout":
        span = _random_span(rng, n, cfg.sample_rate, 2.0)
        for k in range(cfg.n_harmonics // 2, cfg.n_harmonics):
            harmonics[k] = harmonics[k].copy()
            harmonics[k][span] = 0.0

    tone = np.sum(harmonics, axis=0)
    tone /= max(_rms(tone), 1e-12)

    if kind == "amplitude_modulation":
        span = _random_span(rng, n, cfg.sample_rate, 2.0)
        mod = np.ones(n)
        mod[span] = 1.0 + 0.5 * np.sin(2 * np.pi * 4.0 * t[span])
        tone = tone * mod

    if cfg.noise_level > 0:
        tone = tone + rng.normal(0.0, cfg.noise_level, size=n)

    if kind == "transient_clicks":
        for _ in range(int(rng.integers(3, 9))):
            pos = int(rng.integers(0, n - 50))
            tone[pos : pos + 50] += rng.uniform(2.0, 4.0) * np.hanning(50)

    # Headroom so -6 dB noise mixes stay clear of PCM16 clipping.
    return Waveform(samples=tone * 0.05, sample_rate=cfg.sample_rate)


def _random_span(rng, n, sample_rate, span_s):
    span_len = min(int(span_s * sample_rate), n)
    start = int(rng.integers(0, n - span_len + 1))
    return slice(start, start + span_len)


def factory_noise(rng: np.random.Generator, n: int) -> np.ndarray:
    """Low-pass-filtered white noise as a stand-in for factory background."""
    white = rng.normal(0.0, 1.0, size=n + 64)
    kernel = np.hanning(64)
    kernel /= kernel.sum()
    return np.convolve(white, kernel, mode="valid")[:n]


def generate_benchmark(cfg: SynthConfig, root) -> DatasetManifest:
    """Write the full synthetic tree (all SNR tiers and ids) and its manifest.

    Deterministic per cfg.seed: file names and sample bytes are stable
    across regenerations.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    recordings = []
    for snr in cfg.snr_tiers:
        for machine_id in cfg.machine_ids:
            for label_dir, label, count in (
                ("normal", "normal", cfg.n_normal),
                ("abnormal", "anomalous", cfg.n_anomalous),
            ):
                out_dir = root / f"{snr}dB" / "synthetic" / f"id_{machine_id}" / label_dir
                out_dir.mkdir(parents=True, exist_ok=True)
                for i in range(count):
                    key = f"{cfg.seed}:{snr}:{machine_id}:{label}:{i}"
                    clean = synth_recording(
                        cfg, anomalous=(label == "anomalous"),
                        seed=int.from_bytes(hashlib.sha256(key.encode()).digest()[:4], "little"),
                    )
                    noise_rng = _substream("noise", cfg.seed, snr, machine_id, label, i)
                    noise = Waveform(
                        samples=factory_noise(noise_rng, len(clean.samples)),
                        sample_rate=cfg.sample_rate,
                    )
                    mixed = mix_at_snr(clean, noise, snr)
                    name = uuid.uuid5(uuid.NAMESPACE_URL, key).hex + ".wav"
                    write_wav(out_dir / name, mixed)
                    recordings.append(
                        RecordingMeta(
                            path=str(out_dir / name),
                            machine_type="synthetic",
                            machine_id=machine_id,
                            snr_db=snr,
                            label=label,
                        )
                    )
    manifest = DatasetManifest(
        recordings=recordings, sample_rate=cfg.sample_rate, duration=cfg.duration
    )
    save_manifest(root / "manifest.json", manifest)
    return manifest
