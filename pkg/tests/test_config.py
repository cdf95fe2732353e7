# ruff: noqa: PLR2004

import json
from pathlib import Path

import pytest

from main import resolve_config
from src.utils.config import (
    DEFAULT_IMAGE_SHAPE,
    DESK_LEARNING_RATE,
    K_INNER,
    K_OUTER,
    METHOD_ARCHITECTURE,
    METHODS,
    PUBLISHED_BASE_CHANNELS,
    PUBLISHED_LEARNING_RATE,
    PUBLISHED_PRESET,
    PUBLISHED_TABLE1,
    VGG_STAGE_CONVS,
    VGG_STAGE_WIDTHS,
    WEIGHT_DECAY_GRID,
)
from src.utils.exceptions import ConfigError


def test_methods():
    """Test the method tags and their architectures."""
    assert METHODS == ["SB", "DE", "DEW", "VGG"]
    assert METHOD_ARCHITECTURE["DEW"] == METHOD_ARCHITECTURE["DE"] == "DE"


def test_default_image_shape_fits_every_network():
    """Test that the desk image size is divisible by 2**5."""
    assert all(s % 32 == 0 for s in DEFAULT_IMAGE_SHAPE)


def test_vgg_layout():
    """Test the VGG-19 stage layout: 16 convolutions in five stages."""
    assert sum(VGG_STAGE_CONVS) == 16
    assert len(VGG_STAGE_WIDTHS) == len(VGG_STAGE_CONVS) == 5


def test_cross_validation_constants():
    """Test fold counts and the weight decay grid."""
    assert K_OUTER == K_INNER == 3
    assert WEIGHT_DECAY_GRID == [1e-6, 1e-7, 1e-8]


def test_reference_table_rows():
    """Test that only the segmentation column reports Dice and HD."""
    assert set(PUBLISHED_TABLE1["SB"]) == {"PLE", "R", "Dice", "HD"}
    for method in ("DE", "DEW", "VGG"):
        assert set(PUBLISHED_TABLE1[method]) == {"PLE", "R"}


def test_resolve_defaults():
    """Test that an empty flag set resolves to the defaults."""
    config = resolve_config("crossval", {})
    assert config.command == "crossval"
    assert config.learning_rate == DESK_LEARNING_RATE
    assert config.output_dir == Path("out").resolve()
    assert config.image_shape == DEFAULT_IMAGE_SHAPE


def test_published_preset_overrides_defaults():
    """Test the published hyperparameters of --paper-faithful."""
    config = resolve_config("crossval", {"paper_faithful": True})
    assert config.paper_faithful
    assert config.learning_rate == PUBLISHED_LEARNING_RATE
    assert config.base_channels == PUBLISHED_BASE_CHANNELS
    assert config.rotation_range == PUBLISHED_PRESET["rotation_range"]


def test_precedence_file_then_flags(tmp_path):
    """Test defaults < preset < file < flags."""
    path = tmp_path / "run.json"
    path.write_text(
        json.dumps({"paper_faithful": True, "learning_rate": 0.01, "epochs": 3}),
        encoding="utf-8",
    )
    config = resolve_config("train", {"config_file": path, "epochs": 5})
    assert config.base_channels == PUBLISHED_BASE_CHANNELS
    assert config.learning_rate == 0.01
    assert config.epochs == 5


def test_config_file_errors(tmp_path):
    """Test unknown keys, malformed JSON and non-object files."""
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"learning_rte": 0.1}), encoding="utf-8")
    with pytest.raises(ConfigError, match="learning_rte"):
        resolve_config("train", {"config_file": unknown})
    broken = tmp_path / "broken.json"
    broken.write_text("{", encoding="utf-8")
    with pytest.raises(ConfigError, match="Cannot read"):
        resolve_config("train", {"config_file": broken})
    listing = tmp_path / "list.json"
    listing.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ConfigError, match="object"):
        resolve_config("train", {"config_file": listing})


@pytest.mark.parametrize(
    "flags",
    [
        {"count": 0},
        {"epochs": -1},
        {"methods": ["SB", "XX"]},
        {"grouping": "study"},
        {"threads": 0},
        {"weight_decay_grid": []},
    ],
)
def test_invalid_values(flags):
    """Test that inconsistent values raise ConfigError."""
    with pytest.raises(ConfigError):
        resolve_config("crossval", flags)
