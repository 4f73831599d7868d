import json
import struct
import wave

import numpy as np
import pytest

from aeval_extract import ExtractorSpec, extract, register_model
from aeval_extract.cli import main as cli_main

# the metrics workbench is the consumer of the AEMB files we produce;
# its loader is the acceptance check for the container contract
from aeval.dataio import read_embedding_file
from aeval.metrics import EmbeddingSet, ProbabilityMatrix


def write_wav(path, samples, rate=16000):
    pcm = np.clip(np.round(np.asarray(samples) * 32767), -32768, 32767)
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(pcm.astype("<i2").tobytes())


@pytest.fixture()
def manifest(tmp_path):
    rng = np.random.default_rng(0)
    items = []
    for i in range(3):
        ref = f"item{i}-ref.wav"
        gen = f"item{i}-gen.wav"
        write_wav(tmp_path / ref, rng.uniform(-0.8, 0.8, 4000))
        write_wav(tmp_path / gen, rng.uniform(-0.8, 0.8, 4000))
        items.append({"id": f"item{i}", "midi_note": 60,
                      "instrument_family": "synthetic",
                      "reference": ref, "conditions": {"genA": gen}})
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"items": items}))
    return path


class TestEmbeddingExtraction:
    def test_shape_contract(self, manifest, tmp_path):
        out = tmp_path / "ref.aemb"
        extract(manifest, "reference", ExtractorSpec(), out)
        loaded = read_embedding_file(out)
        assert isinstance(loaded, EmbeddingSet)
        assert loaded.vectors.shape == (3, 128)

    def test_mean_layer_halves_width(self, manifest, tmp_path):
        out = tmp_path / "ref.aemb"
        extract(manifest, "reference", ExtractorSpec(layer="mean"), out)
        assert read_embedding_file(out).vectors.shape == (3, 64)

    def test_rows_follow_manifest_order(self, manifest, tmp_path):
        full = tmp_path / "full.aemb"
        extract(manifest, "reference", ExtractorSpec(batch_size=2), full)
        one = tmp_path / "one.aemb"
        doc = json.loads(manifest.read_text())
        solo = manifest.parent / "solo.json"
        solo.write_text(json.dumps({"items": doc["items"][:1]}))
        extract(solo, "reference", ExtractorSpec(), one)
        np.testing.assert_array_equal(
            read_embedding_file(full).vectors[0],
            read_embedding_file(one).vectors[0])

    def test_condition_selection(self, manifest, tmp_path):
        ref = tmp_path / "r.aemb"
        gen = tmp_path / "g.aemb"
        extract(manifest, "reference", ExtractorSpec(), ref)
        extract(manifest, "genA", ExtractorSpec(), gen)
        assert not np.array_equal(read_embedding_file(ref).vectors,
                                  read_embedding_file(gen).vectors)

    def test_unknown_condition_names_item(self, manifest, tmp_path):
        with pytest.raises(ValueError, match="item0"):
            extract(manifest, "genB", ExtractorSpec(), tmp_path / "x.aemb")


class TestProbabilityExtraction:
    def test_rows_sum_to_one(self, manifest, tmp_path):
        out = tmp_path / "probs.aemb"
        extract(manifest, "reference",
                ExtractorSpec(model="builtin:band-probs"), out)
        loaded = read_embedding_file(out)
        assert isinstance(loaded, ProbabilityMatrix)
        assert loaded.probs.shape == (3, 11)
        np.testing.assert_allclose(loaded.probs.sum(axis=1), 1.0, atol=1e-6)


class TestErrors:
    def test_corrupt_wav_names_item(self, manifest, tmp_path):
        (manifest.parent / "item1-ref.wav").write_bytes(b"RIFFnope")
        with pytest.raises(ValueError, match="item1"):
            extract(manifest, "reference", ExtractorSpec(),
                    tmp_path / "x.aemb")

    def test_unknown_model(self, manifest, tmp_path):
        with pytest.raises(ValueError, match="cannot load model"):
            extract(manifest, "reference",
                    ExtractorSpec(model="builtin:nope"), tmp_path / "x.aemb")

    def test_dimension_drift_detected(self, manifest, tmp_path):
        calls = []

        def drifty(clips, layer):
            calls.append(len(clips))
            width = 4 if len(calls) == 1 else 5
            return np.zeros((len(clips), width))

        register_model("test:drifty", drifty, "embedding")
        with pytest.raises(ValueError, match="dimension drift"):
            extract(manifest, "reference",
                    ExtractorSpec(model="test:drifty", batch_size=2),
                    tmp_path / "x.aemb")


class TestCli:
    def test_cli_writes_file(self, manifest, tmp_path, capsys):
        out = tmp_path / "cli.aemb"
        code = cli_main(["--manifest", str(manifest), "--condition",
                         "reference", "--model", "builtin:band-probs",
                         "--out", str(out)])
        assert code == 0
        assert read_embedding_file(out).probs.shape == (3, 11)

    def test_cli_error_exit(self, manifest, tmp_path, capsys):
        code = cli_main(["--manifest", str(manifest), "--condition", "nope",
                         "--out", str(tmp_path / "x.aemb")])
        assert code == 2
        assert "item0" in capsys.readouterr().err
