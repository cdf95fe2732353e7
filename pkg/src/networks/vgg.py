"""VGG-19 style regressor.

Five stages of 3x3 convolutions (2, 2, 4, 4, 4 per stage), each followed by batch norm
and ReLU, with 2x2 max pooling at the end of every stage, then the same fully
connected head as the encoder-regressor.
"""

from typing import Any, Dict, List, Optional

import numpy as np

from src.networks.bundle import Architecture, ModelBundle, register_architecture
from src.networks.layers import (
    LayerSpec,
    conv_bn_relu,
    conv_bn_specs,
    fc_head,
    fc_head_specs,
)
from src.nn import functional as F
from src.nn.tensor import Tensor
from src.utils.exceptions import ShapeError
from src.utils.models import VGGConfig


def _stage_layers(cfg: VGGConfig):
    """Yield (stage, index within stage, in_channels, out_channels)."""
    index, previous = 0, None
    for stage, in_channels, out_channels in cfg.conv_plan:
        index = index + 1 if stage == previous else 1
        previous = stage
        yield stage, index, in_channels, out_channels


def vgg_plan(cfg: VGGConfig) -> List[LayerSpec]:
    """Return the layer specs of the VGG regressor."""
    plan: List[LayerSpec] = []
    for stage, index, in_channels, out_channels in _stage_layers(cfg):
        plan += conv_bn_specs(f"stage{stage}", index, in_channels, out_channels)
    h, w = (s // cfg.divisor for s in cfg.input_shape)
    plan += fc_head_specs(
        cfg.stage_widths[-1] * h * w, cfg.fc_nodes, cfg.fc_layers, cfg.output_dim
    )
    return plan


def vgg_forward(
    model: ModelBundle, x: Tensor, rng: Optional[np.random.Generator] = None
) -> Tensor:
    """Regressed (standardised) length, shape (N, output_dim)."""
    cfg: VGGConfig = model.config
    if x.shape[1] != cfg.in_channels or tuple(x.shape[2:]) != tuple(cfg.input_shape):
        raise ShapeError(
            f"VGG expects ({cfg.in_channels}, {tuple(cfg.input_shape)}) inputs, "
            f"got {x.shape[1:]}"
        )
    for stage, index, _, _ in _stage_layers(cfg):
        x = conv_bn_relu(model, f"stage{stage}", x, index)
        if index == cfg.stage_convs[stage]:
            x = F.max_pool2(x)
    return fc_head(model, F.flatten(x), cfg.fc_layers)


def _vgg_config(data: Dict[str, Any]) -> VGGConfig:
    data = dict(data)
    for key in ("stage_widths", "stage_convs", "input_shape"):
        data[key] = tuple(data[key])
    return VGGConfig(**data)


register_architecture(Architecture("VGG", vgg_plan, vgg_forward, _vgg_config))


def build_vgg_regressor(cfg: VGGConfig, seed: int = 0) -> ModelBundle:
    """Build the VGG-19 style regressor.

    Args:
        cfg (VGGConfig): Network configuration.
        seed (int): Initialisation seed.

    Returns:
        ModelBundle: Bundle tagged ``VGG``.
    """
    cfg.validate()
    return ModelBundle.from_plan("VGG", cfg, vgg_plan(cfg), seed)
