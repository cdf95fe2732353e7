"""U-Net segmentation network (SB) and encoder-regressor (DE / DEW).

Both networks share the same encoder: ``depth`` blocks of two 3x3 convolutions with
batch norm and ReLU followed by 2x2 max pooling, then a bottleneck block with dropout.
The U-Net decodes with stride-2 transposed convolutions and skip concatenations; the
encoder-regressor flattens the bottleneck and feeds the fully connected head.
"""

from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.networks.bundle import Architecture, ModelBundle, register_architecture
from src.networks.layers import (
    LayerSpec,
    conv_bn_relu,
    conv_bn_specs,
    conv_spec,
    fc_head,
    fc_head_specs,
    upconv_spec,
)
from src.nn import functional as F
from src.nn.tensor import Tensor
from src.utils.exceptions import ShapeError
from src.utils.models import RegressorConfig, UNetConfig

ENCODER_PREFIXES = ("enc", "bottleneck")


def encoder_plan(cfg: UNetConfig) -> List[LayerSpec]:
    """Return the layer specs of the encoder and bottleneck."""
    plan: List[LayerSpec] = []
    in_channels = cfg.in_channels
    for level in range(cfg.depth):
        channels = cfg.channels(level)
        plan += conv_bn_specs(f"enc{level}", 1, in_channels, channels)
        plan += conv_bn_specs(f"enc{level}", 2, channels, channels)
        in_channels = channels
    channels = cfg.channels(cfg.depth)
    plan += conv_bn_specs("bottleneck", 1, in_channels, channels)
    plan += conv_bn_specs("bottleneck", 2, channels, channels)
    return plan


def unet_plan(cfg: UNetConfig) -> List[LayerSpec]:
    """Return the layer specs of the full U-Net."""
    plan = encoder_plan(cfg)
    for level in reversed(range(cfg.depth)):
        channels = cfg.channels(level)
        plan.append(upconv_spec(f"dec{level}.up", cfg.channels(level + 1), channels))
        plan += conv_bn_specs(f"dec{level}", 1, 2 * channels, channels)
        plan += conv_bn_specs(f"dec{level}", 2, channels, channels)
    plan.append(conv_spec("head", cfg.channels(0), 1, 1))
    return plan


def bottleneck_shape(
    cfg: UNetConfig, input_shape: Tuple[int, int]
) -> Tuple[int, int, int]:
    """Return (C, h, w) of the bottleneck feature map for an input size."""
    return (
        cfg.channels(cfg.depth),
        input_shape[0] // cfg.divisor,
        input_shape[1] // cfg.divisor,
    )


def regressor_plan(cfg: RegressorConfig) -> List[LayerSpec]:
    """Return the layer specs of the encoder-regressor."""
    channels, h, w = bottleneck_shape(cfg.encoder, cfg.input_shape)
    return encoder_plan(cfg.encoder) + fc_head_specs(
        channels * h * w, cfg.fc_nodes, cfg.fc_layers, cfg.output_dim
    )


def _check_input(x: Tensor, cfg: UNetConfig):
    if x.shape[1] != cfg.in_channels:
        raise ShapeError(f"Expected {cfg.in_channels} input channels, got {x.shape[1]}")
    if x.shape[2] % cfg.divisor or x.shape[3] % cfg.divisor:
        raise ShapeError(
            f"Input size {x.shape[2:]} is not divisible by 2**{cfg.depth}"
        )


def encode(
    model: ModelBundle, cfg: UNetConfig, x: Tensor, rng: Optional[np.random.Generator]
) -> Tuple[Tensor, List[Tensor]]:
    """Run the encoder; return the bottleneck features and the skip tensors."""
    _check_input(x, cfg)
    skips = []
    for level in range(cfg.depth):
        x = conv_bn_relu(model, f"enc{level}", x, 1)
        x = conv_bn_relu(model, f"enc{level}", x, 2)
        skips.append(x)
        x = F.max_pool2(x)
    x = conv_bn_relu(model, "bottleneck", x, 1)
    x = conv_bn_relu(model, "bottleneck", x, 2)
    x = F.dropout(x, cfg.dropout_p, model.training, rng)
    return x, skips


def unet_forward(
    model: ModelBundle, x: Tensor, rng: Optional[np.random.Generator] = None
) -> Tensor:
    """Per-pixel spleen probability, same spatial size as the input."""
    cfg: UNetConfig = model.config
    x, skips = encode(model, cfg, x, rng)
    for level in reversed(range(cfg.depth)):
        x = F.transposed_conv2d(
            x, model.param(f"dec{level}.up.weight"), model.param(f"dec{level}.up.bias")
        )
        x = F.concat([skips[level], x], axis=1)
        x = conv_bn_relu(model, f"dec{level}", x, 1)
        x = conv_bn_relu(model, f"dec{level}", x, 2)
    x = F.conv2d(x, model.param("head.weight"), model.param("head.bias"))
    return F.sigmoid(x)


def regressor_forward(
    model: ModelBundle, x: Tensor, rng: Optional[np.random.Generator] = None
) -> Tensor:
    """Regressed (standardised) length, shape (N, output_dim)."""
    cfg: RegressorConfig = model.config
    if tuple(x.shape[2:]) != tuple(cfg.input_shape):
        raise ShapeError(
            f"Regressor expects input {tuple(cfg.input_shape)}, got {x.shape[2:]}"
        )
    features, _ = encode(model, cfg.encoder, x, rng)
    return fc_head(model, F.flatten(features), cfg.fc_layers)


def _unet_config(data: Dict[str, Any]) -> UNetConfig:
    return UNetConfig(**data)


def _regressor_config(data: Dict[str, Any]) -> RegressorConfig:
    data = dict(data)
    return RegressorConfig(
        encoder=UNetConfig(**data.pop("encoder")),
        input_shape=tuple(data.pop("input_shape")),
        **data,
    )


register_architecture(Architecture("SB", unet_plan, unet_forward, _unet_config))
register_architecture(
    Architecture("DE", regressor_plan, regressor_forward, _regressor_config)
)


def build_unet(cfg: UNetConfig, seed: int = 0) -> ModelBundle:
    """Build the segmentation U-Net.

    Args:
        cfg (UNetConfig): Network configuration.
        seed (int): Initialisation seed.

    Returns:
        ModelBundle: Bundle tagged ``SB``.
    """
    cfg.validate()
    return ModelBundle.from_plan("SB", cfg, unet_plan(cfg), seed)


def build_encoder_regressor(cfg: RegressorConfig, seed: int = 0) -> ModelBundle:
    """Build the encoder-regressor used by DE and DEW.

    Args:
        cfg (RegressorConfig): Network configuration, including the input size that
            fixes the width of the first fully connected layer.
        seed (int): Initialisation seed.

    Returns:
        ModelBundle: Bundle tagged ``DE``.
    """
    cfg.validate()
    return ModelBundle.from_plan("DE", cfg, regressor_plan(cfg), seed)
