"""Checkpoint container: byte determinism, exact round trips, and the
corruption error paths."""

import io
import struct

import numpy as np
import pytest

from acrank.checkpoint import (
    FORMAT_VERSION,
    MAGIC,
    CheckpointError,
    deserialize_checkpoint,
    export_text,
    load_checkpoint,
    save_checkpoint,
    serialize_checkpoint,
)
from acrank.features import FeatureLayout, FeatureVector
from acrank.model import (
    PARAM_KEYS,
    FeatureScaler,
    NetworkConfig,
    RankerModel,
)


def trained_like_model(seed: int = 3) -> RankerModel:
    layout = FeatureLayout()
    cfg = NetworkConfig(
        dense_len=layout.dense_len, series_len=layout.series_len,
        context_len=layout.context_len, query_repr_units=8, lstm_units=4,
        context_repr_units=8, merge_units=8, seed=seed)
    rng = np.random.default_rng(seed)
    scaler = FeatureScaler.fit(rng.normal(size=(30, layout.dense_len)),
                               rng.normal(size=(30, layout.series_len)))
    model = RankerModel.initialize(cfg, layout, scaler)
    return model.with_metadata(epochs=4, best_epoch=2, seed=seed)


def sample_vectors(layout: FeatureLayout, count: int, seed: int = 9):
    rng = np.random.default_rng(seed)
    return [
        FeatureVector(dense=rng.normal(size=layout.dense_len),
                      series=rng.normal(size=layout.series_len),
                      context=rng.normal(size=layout.context_len))
        for _ in range(count)
    ]


class TestSerialize:
    def test_magic_and_version(self):
        blob = serialize_checkpoint(trained_like_model())
        assert blob[:8] == MAGIC
        assert struct.unpack("<I", blob[8:12])[0] == FORMAT_VERSION

    def test_byte_identical_across_calls(self):
        model = trained_like_model()
        assert serialize_checkpoint(model) == serialize_checkpoint(model)

    def test_different_params_different_bytes(self):
        a = serialize_checkpoint(trained_like_model(seed=1))
        b = serialize_checkpoint(trained_like_model(seed=2))
        assert a != b

    def test_round_trip_exact(self):
        model = trained_like_model()
        clone = deserialize_checkpoint(serialize_checkpoint(model))
        for key in PARAM_KEYS:
            np.testing.assert_array_equal(clone.params[key], model.params[key])
        assert clone.config == model.config
        assert clone.layout == model.layout
        assert clone.metadata == model.metadata
        assert clone.ranker_id == model.ranker_id
        np.testing.assert_array_equal(clone.scaler.dense_mean,
                                      model.scaler.dense_mean)
        assert clone.scaler.series_std == model.scaler.series_std

    def test_round_trip_scores_bit_identical(self):
        model = trained_like_model()
        clone = deserialize_checkpoint(serialize_checkpoint(model))
        vectors = sample_vectors(model.layout, 8)
        np.testing.assert_array_equal(model.score_features(vectors),
                                      clone.score_features(vectors))

    def test_reserialize_round_trip_byte_identical(self):
        model = trained_like_model()
        blob = serialize_checkpoint(model)
        assert serialize_checkpoint(deserialize_checkpoint(blob)) == blob

    def test_negative_strides_handled(self):
        model = trained_like_model()
        model.params["query_w"] = model.params["query_w"][::-1]
        clone = deserialize_checkpoint(serialize_checkpoint(model))
        np.testing.assert_array_equal(clone.params["query_w"],
                                      model.params["query_w"])


class TestFileRoundTrip:
    def test_save_then_load(self, tmp_path):
        model = trained_like_model()
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, path)
        clone = load_checkpoint(path)
        for key in PARAM_KEYS:
            np.testing.assert_array_equal(clone.params[key], model.params[key])

    def test_save_is_deterministic_on_disk(self, tmp_path):
        model = trained_like_model()
        first = tmp_path / "a.ckpt"
        second = tmp_path / "b.ckpt"
        save_checkpoint(model, first)
        save_checkpoint(model, second)
        assert first.read_bytes() == second.read_bytes()

    def test_no_droppings_on_save(self, tmp_path):
        save_checkpoint(trained_like_model(), tmp_path / "m.ckpt")
        assert [p.name for p in tmp_path.iterdir()] == ["m.ckpt"]


class TestCorruption:
    def blob(self):
        return serialize_checkpoint(trained_like_model())

    def test_bad_magic(self):
        blob = b"XXXXXXXX" + self.blob()[8:]
        with pytest.raises(CheckpointError, match="magic"):
            deserialize_checkpoint(blob)

    def test_too_short(self):
        with pytest.raises(CheckpointError):
            deserialize_checkpoint(b"ACRANKPT")

    def test_unsupported_version(self):
        blob = self.blob()
        blob = blob[:8] + struct.pack("<I", 99) + blob[12:]
        with pytest.raises(CheckpointError, match="version 99"):
            deserialize_checkpoint(blob)

    def test_truncated_header(self):
        blob = self.blob()
        with pytest.raises(CheckpointError, match="truncated"):
            deserialize_checkpoint(blob[:30])

    def test_header_not_json(self):
        blob = self.blob()
        (header_len,) = struct.unpack("<Q", blob[12:20])
        junk = b"{" * header_len
        with pytest.raises(CheckpointError, match="unreadable"):
            deserialize_checkpoint(blob[:20] + junk + blob[20 + header_len:])

    def test_flipped_payload_byte_detected(self):
        blob = bytearray(self.blob())
        blob[-5] ^= 0xFF
        with pytest.raises(CheckpointError, match="hash"):
            deserialize_checkpoint(bytes(blob))

    def test_truncated_payload_detected(self):
        with pytest.raises(CheckpointError):
            deserialize_checkpoint(self.blob()[:-16])

    def test_partial_file_on_disk(self, tmp_path):
        path = tmp_path / "broken.ckpt"
        path.write_bytes(self.blob()[: len(self.blob()) // 2])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)


class TestExportText:
    def test_contains_every_tensor_and_no_binary(self):
        model = trained_like_model()
        out = io.StringIO()
        export_text(model, out)
        text = out.getvalue()
        for name in PARAM_KEYS:
            assert f"tensor {name} " in text
        assert text.isprintable() or "\n" in text
        assert str(model.config.lstm_units) in text

    def test_values_round_trip_through_repr(self):
        model = trained_like_model()
        out = io.StringIO()
        export_text(model, out)
        lines = out.getvalue().splitlines()
        start = lines.index("tensor query_w shape=[4, 8]")
        parsed = [float(tok) for tok in lines[start + 1].split()]
        np.testing.assert_array_equal(parsed, model.params["query_w"][0])

    def test_deterministic(self):
        model = trained_like_model()
        a, b = io.StringIO(), io.StringIO()
        export_text(model, a)
        export_text(model, b)
        assert a.getvalue() == b.getvalue()
