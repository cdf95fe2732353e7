# ruff: noqa: PLR2004

import numpy as np
import pytest

from src.networks.bundle import describe_plan, plan_parameter_count
from src.networks.transfer import is_encoder_name, transfer_encoder_weights
from src.networks.unet import build_encoder_regressor, build_unet, encode, unet_plan
from src.networks.vgg import build_vgg_regressor, vgg_plan
from src.nn.tensor import Tensor
from src.utils.exceptions import ConfigError, ShapeError
from src.utils.models import RegressorConfig, UNetConfig, VGGConfig


@pytest.fixture
def tiny_unet_config():
    """Create a one-level U-Net configuration with two base channels."""
    return UNetConfig(base_channels=2, depth=1)


@pytest.fixture
def tiny_regressor_config():
    """Create an encoder-regressor matching the tiny U-Net."""
    return RegressorConfig(
        encoder=UNetConfig(base_channels=2, depth=1),
        input_shape=(4, 4),
        fc_nodes=3,
        fc_layers=1,
    )


def test_unet_parameter_count(tiny_unet_config):
    """Test the U-Net parameter count against a hand count."""
    # encoder 306, up-conv 34, decoder convs and norms 120, 1x1 head 3
    assert plan_parameter_count("SB", tiny_unet_config) == 463
    model = build_unet(tiny_unet_config)
    assert model.num_parameters == 463


def test_regressor_parameter_count(tiny_regressor_config):
    """Test the encoder-regressor parameter count against a hand count."""
    # encoder 306, fc0 51, its norm 6, output 4
    assert plan_parameter_count("DE", tiny_regressor_config) == 367


def test_unet_output_shape_and_range(tiny_unet_config):
    """Test that the U-Net maps (N, 1, H, W) to probabilities of the same size."""
    model = build_unet(tiny_unet_config, seed=1)
    out = model.forward(Tensor(np.random.default_rng(0).random((2, 1, 8, 6))))
    assert out.shape == (2, 1, 8, 6)
    assert np.all((out.data > 0) & (out.data < 1))


def test_unet_rejects_indivisible_input(tiny_unet_config):
    """Test that inputs must be divisible by 2**depth."""
    model = build_unet(tiny_unet_config)
    with pytest.raises(ShapeError, match="divisible"):
        model.forward(np.zeros((1, 1, 5, 6)))


def test_regressor_output_shape(tiny_regressor_config):
    """Test the regressor output shape in both modes."""
    model = build_encoder_regressor(tiny_regressor_config)
    x = np.random.default_rng(0).random((3, 1, 4, 4))
    assert model.forward(x).shape == (3, 1)
    model.train()
    assert model.forward(x, np.random.default_rng(1)).shape == (3, 1)


def test_regressor_rejects_other_input_size(tiny_regressor_config):
    """Test that the regressor input size is fixed by its configuration."""
    model = build_encoder_regressor(tiny_regressor_config)
    with pytest.raises(ShapeError):
        model.forward(np.zeros((2, 1, 8, 8)))


def test_vgg_plan_layout():
    """Test the VGG-19 stage layout and output shape."""
    cfg = VGGConfig.scaled(32, input_shape=(32, 32), fc_nodes=4, fc_layers=1)
    plan = vgg_plan(cfg)
    convs = [layer for layer in plan if layer.kind == "conv3x3"]
    assert len(convs) == 16
    assert [layer.name for layer in convs[:3]] == [
        "stage0.conv1",
        "stage0.conv2",
        "stage1.conv1",
    ]
    model = build_vgg_regressor(cfg)
    x = np.random.default_rng(0).random((2, 1, 32, 32))
    assert model.forward(x).shape == (2, 1)


def test_vgg_config_rejects_indivisible_input():
    """Test that the VGG input size must be divisible by 32."""
    with pytest.raises(ConfigError, match="divisible"):
        VGGConfig.scaled(32, input_shape=(40, 30)).validate()


def test_describe_plan_matches_parameter_count(tiny_unet_config):
    """Test that the parameter table sums to the plan count."""
    table = describe_plan(unet_plan(tiny_unet_config))
    assert list(table.columns) == ["layer", "kind", "name", "shape", "parameters"]
    assert table["parameters"].sum() == 463
    assert table["name"].is_unique


def test_initialisation_is_seeded(tiny_unet_config):
    """Test that equal seeds give equal weights and different seeds differ."""
    a = build_unet(tiny_unet_config, seed=5).state_dict()
    b = build_unet(tiny_unet_config, seed=5).state_dict()
    c = build_unet(tiny_unet_config, seed=6).state_dict()
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert not np.array_equal(a["enc0.conv1.weight"], c["enc0.conv1.weight"])


def test_transfer_copies_encoder_only(tiny_unet_config, tiny_regressor_config):
    """Test that encoder tensors are copied exactly and the head is untouched."""
    sb = build_unet(tiny_unet_config, seed=1)
    for name in sb.buffers:
        sb.buffers[name] += 0.5
    de = build_encoder_regressor(tiny_regressor_config, seed=2)
    head_before = de.param("out.weight").data.copy()

    transfer_encoder_weights(sb, de)

    for name, tensor in de.params.items():
        if is_encoder_name(name):
            assert tensor.data.tobytes() == sb.params[name].data.tobytes()
    for name, buffer in de.buffers.items():
        if is_encoder_name(name):
            np.testing.assert_array_equal(buffer, sb.buffers[name])
    np.testing.assert_array_equal(de.param("out.weight").data, head_before)
    assert not de.frozen


def test_transfer_gives_identical_bottleneck_features(
    tiny_unet_config, tiny_regressor_config
):
    """Test that the transferred encoder computes the same bottleneck as the U-Net."""
    sb = build_unet(tiny_unet_config, seed=1)
    de = transfer_encoder_weights(
        sb, build_encoder_regressor(tiny_regressor_config, seed=2)
    )
    x = Tensor(np.random.default_rng(3).random((2, 1, 4, 4)))
    features_sb, _ = encode(sb, sb.config, x, None)
    features_de, _ = encode(de, de.config.encoder, x, None)
    np.testing.assert_array_equal(features_sb.data, features_de.data)


def test_transfer_freeze_marks_encoder(tiny_unet_config, tiny_regressor_config):
    """Test that freezing excludes encoder parameters from optimisation."""
    sb = build_unet(tiny_unet_config)
    de = transfer_encoder_weights(
        sb, build_encoder_regressor(tiny_regressor_config), freeze=True
    )
    trainable = de.trainable_parameters()
    assert "enc0.conv1.weight" not in trainable
    assert "out.weight" in trainable
    assert de.metadata["encoder_frozen"] is True


def test_transfer_rejects_mismatched_encoder(tiny_regressor_config):
    """Test that encoders of different width cannot be transferred."""
    sb = build_unet(UNetConfig(base_channels=4, depth=1))
    with pytest.raises(ConfigError, match="differ"):
        transfer_encoder_weights(sb, build_encoder_regressor(tiny_regressor_config))
