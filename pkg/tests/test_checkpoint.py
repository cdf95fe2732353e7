# ruff: noqa: PLR2004

import json

import numpy as np
import pytest

from src.networks.bundle import ModelBundle
from src.networks.unet import build_unet
from src.nn.checkpoint import (
    decode_array,
    encode_array,
    load_checkpoint,
    save_checkpoint,
)
from src.utils.exceptions import CheckpointError
from src.utils.models import UNetConfig


@pytest.fixture
def small_unet():
    """Create a tiny U-Net with non-trivial buffers."""
    model = build_unet(UNetConfig(base_channels=2, depth=1), seed=3)
    for name in model.buffers:
        model.buffers[name] += 0.25
    model.metadata["note"] = "test"
    return model


def test_array_record_is_bit_exact():
    """Test that awkward float values survive encoding."""
    values = np.array([[0.1, -0.0, 1e-310], [np.pi, 2.0**60, -1.5]])
    restored = decode_array(encode_array(values))
    assert restored.shape == values.shape
    assert restored.tobytes() == values.tobytes()


def test_save_and_load_checkpoint(tmp_path):
    """Test the checkpoint file round trip with metadata."""
    arrays = {"a": np.arange(6.0).reshape(2, 3), "b": np.ones(1)}
    path = save_checkpoint(tmp_path / "sub" / "ckpt.json", arrays, {"seed": 7})
    loaded, metadata = load_checkpoint(path)
    assert list(loaded) == ["a", "b"]
    np.testing.assert_array_equal(loaded["a"], arrays["a"])
    assert metadata == {"seed": 7}


def test_load_missing_checkpoint(tmp_path):
    """Test that a missing file raises CheckpointError."""
    with pytest.raises(CheckpointError, match="Cannot read"):
        load_checkpoint(tmp_path / "missing.json")


def test_load_checkpoint_wrong_version(tmp_path):
    """Test that another format version is refused."""
    path = tmp_path / "old.json"
    path.write_text(json.dumps({"version": 99, "arrays": []}), encoding="utf-8")
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_load_checkpoint_bad_shape(tmp_path):
    """Test that an array record with the wrong size is refused."""
    record = {"name": "a", **encode_array(np.ones(3))}
    record["shape"] = [2, 2]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"version": 1, "arrays": [record]}), encoding="utf-8")
    with pytest.raises(CheckpointError, match="cannot have shape"):
        load_checkpoint(path)


def test_model_bundle_round_trip_is_bit_exact(small_unet, tmp_path):
    """Test that a saved bundle reloads with identical values and predictions."""
    path = small_unet.save(tmp_path / "sb.json")
    loaded = ModelBundle.load(path)
    assert loaded.architecture == "SB"
    assert loaded.config == small_unet.config
    assert loaded.metadata["note"] == "test"
    original, restored = small_unet.state_dict(), loaded.state_dict()
    assert list(original) == list(restored)
    for name, value in original.items():
        assert restored[name].tobytes() == value.tobytes()
    batch = np.random.default_rng(0).random((1, 1, 8, 8))
    assert loaded.predict(batch).tobytes() == small_unet.predict(batch).tobytes()


def test_load_state_dict_reports_mismatch(small_unet):
    """Test that missing entries are reported."""
    state = small_unet.state_dict()
    state.pop("head.bias")
    with pytest.raises(CheckpointError, match="missing"):
        small_unet.load_state_dict(state)
