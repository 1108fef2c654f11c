import json
import struct
import wave
from pathlib import Path

import numpy as np
import pytest

from fvec_exporter import EXTRACTORS, embed_recording, export_features, read_fvec
from fvec_exporter.cli import main
from fvec_exporter.extractors import get_spec
from fvec_exporter.fvec import FvecFormatError, write_fvec

EXPECTED = {
    "vggish": 128,
    "l3env": 512,
    "l3music": 512,
    "musicnn": 753,
    "densenet121": 1024,
    "resnet34": 512,
}


def write_test_wav(path: Path, seconds: float = 10.0, rate: int = 16000, seed: int = 0):
    rng = np.random.default_rng(seed)
    t = np.arange(int(seconds * rate)) / rate
    samples = 0.3 * np.sin(2 * np.pi * 220.0 * t) + 0.05 * rng.normal(size=t.shape)
    pcm = np.clip(np.round(samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(pcm.tobytes())


@pytest.fixture(scope="module")
def wav_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("wavs")
    for i in range(3):
        write_test_wav(d / f"rec{i}.wav", seed=i)
    return d


class TestDims:
    @pytest.mark.parametrize("tag,dim", sorted(EXPECTED.items()))
    def test_dim_and_count_per_extractor(self, wav_dir, tag, dim):
        vectors = embed_recording(wav_dir / "rec0.wav", get_spec(tag))
        assert vectors.shape == (20, dim)

    def test_registry_matches_expected_table(self):
        assert {name: s.expected_dim for name, s in EXTRACTORS.items()} == EXPECTED

    def test_unknown_tag_rejected(self):
        with pytest.raises(KeyError):
            get_spec("resnet50")


class TestByteFormat:
    def test_emitted_layout_parses_by_hand(self, wav_dir, tmp_path):
        export_features([wav_dir / "rec0.wav"], get_spec("vggish"), tmp_path)
        raw = (tmp_path / "rec0.fvec").read_bytes()
        assert raw[:5] == b"FVEC1"
        count, dim = struct.unpack("<II", raw[5:13])
        assert (count, dim) == (20, 128)
        assert len(raw) == 13 + 4 * count * dim
        values = np.frombuffer(raw[13:], dtype="<f4")
        assert np.all(np.isfinite(values))

    def test_round_trip(self, tmp_path):
        vectors = np.arange(12, dtype=np.float32).reshape(3, 4)
        write_fvec(tmp_path / "x.fvec", vectors, source_path="x.wav",
                   extractor_tag="vggish", window_s=1.0, hop_s=0.5)
        np.testing.assert_array_equal(read_fvec(tmp_path / "x.fvec"), vectors)

    def test_sidecar_records_geometry(self, tmp_path):
        write_fvec(tmp_path / "x.fvec", np.zeros((2, 3), dtype=np.float32),
                   source_path="x.wav", extractor_tag="musicnn",
                   window_s=1.0, hop_s=0.5)
        sidecar = json.loads((tmp_path / "x.fvec.json").read_text())
        assert sidecar["extractor_tag"] == "musicnn"
        assert sidecar["window_seconds"] == 1.0
        assert sidecar["hop_seconds"] == 0.5

    def test_truncated_file_rejected(self, tmp_path):
        (tmp_path / "bad.fvec").write_bytes(b"FVEC1" + struct.pack("<II", 5, 5))
        with pytest.raises(FvecFormatError):
            read_fvec(tmp_path / "bad.fvec")

    def test_wrong_magic_rejected(self, tmp_path):
        (tmp_path / "bad.fvec").write_bytes(b"NOPE!" + struct.pack("<II", 0, 0))
        with pytest.raises(FvecFormatError):
            read_fvec(tmp_path / "bad.fvec")


class TestExport:
    def test_empty_input_list(self, tmp_path):
        result = export_features([], get_spec("vggish"), tmp_path)
        assert result.exported == [] and result.skipped == []
        manifest = json.loads((tmp_path / "export_manifest.json").read_text())
        assert manifest["exported"] == []
        assert manifest["backend_version"]

    def test_undecodable_input_skipped_with_reason(self, wav_dir, tmp_path):
        bad = tmp_path / "bad.wav"
        bad.write_bytes(b"not a wav")
        result = export_features([wav_dir / "rec0.wav", bad],
                                 get_spec("vggish"), tmp_path / "out")
        assert len(result.exported) == 1
        assert len(result.skipped) == 1 and "bad.wav" in result.skipped[0]["path"]

    def test_rerun_is_byte_identical(self, wav_dir, tmp_path):
        wavs = sorted(wav_dir.glob("*.wav"))
        export_features(wavs, get_spec("resnet34"), tmp_path / "a")
        export_features(wavs, get_spec("resnet34"), tmp_path / "b")
        for name in ("rec0.fvec", "rec1.fvec", "rec2.fvec"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_extractors_define_distinct_embeddings(self, wav_dir):
        a = embed_recording(wav_dir / "rec0.wav", get_spec("l3env"))
        b = embed_recording(wav_dir / "rec0.wav", get_spec("resnet34"))
        assert a.shape == b.shape and not np.allclose(a, b)


class TestCli:
    def test_export_directory(self, wav_dir, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["export", "--extractor", "vggish",
                     "--in", str(wav_dir), "--out", str(out)])
        assert code == 0
        assert len(list(out.glob("*.fvec"))) == 3
        assert "exported 3" in capsys.readouterr().out

    def test_empty_directory_is_success(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert main(["export", "--extractor", "vggish",
                     "--in", str(empty), "--out", str(tmp_path / "out")]) == 0
        manifest = json.loads((tmp_path / "out" / "export_manifest.json").read_text())
        assert manifest["exported"] == []

    def test_missing_directory_is_error(self, tmp_path):
        assert main(["export", "--extractor", "vggish",
                     "--in", str(tmp_path / "nope"), "--out", str(tmp_path)]) == 2
