"""Layer plans and shared forward blocks.

A layer plan lists every parameterised layer of a network with the shapes of its
parameters. Plans are computed from a configuration alone, so parameter counts and
layer tables are available without allocating weights.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from src.nn import functional as F
from src.nn.tensor import Tensor


@dataclass(frozen=True)
class ParamSpec:
    """Shape and initialisation kind of one parameter tensor.

    Attributes:
        name (str): Unique dotted name, e.g. ``enc0.conv1.weight``.
        shape (Tuple[int, ...]): Parameter shape.
        kind (str): ``weight``, ``bias``, ``gamma`` or ``beta``.
        fan_in (int): Inputs feeding one output unit (weights only).
    """

    name: str
    shape: Tuple[int, ...]
    kind: str
    fan_in: int = 0

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


@dataclass(frozen=True)
class LayerSpec:
    """One parameterised layer.

    Attributes:
        name (str): Layer prefix shared by its parameters.
        kind (str): ``conv3x3``, ``conv1x1``, ``upconv2x2``, ``batchnorm`` or
            ``linear``.
        params (Tuple[ParamSpec, ...]): Trainable parameters.
        buffers (Tuple[str, ...]): Names of running statistics (batch norm only).
    """

    name: str
    kind: str
    params: Tuple[ParamSpec, ...]
    buffers: Tuple[str, ...] = ()

    @property
    def parameter_count(self) -> int:
        return sum(p.size for p in self.params)


def conv_spec(name: str, in_channels: int, out_channels: int, kernel: int) -> LayerSpec:
    fan_in = in_channels * kernel * kernel
    return LayerSpec(
        name,
        f"conv{kernel}x{kernel}",
        (
            ParamSpec(
                f"{name}.weight",
                (out_channels, in_channels, kernel, kernel),
                "weight",
                fan_in,
            ),
            ParamSpec(f"{name}.bias", (out_channels,), "bias"),
        ),
    )


def upconv_spec(name: str, in_channels: int, out_channels: int) -> LayerSpec:
    return LayerSpec(
        name,
        "upconv2x2",
        (
            ParamSpec(
                f"{name}.weight",
                (in_channels, out_channels, 2, 2),
                "weight",
                in_channels * 4,
            ),
            ParamSpec(f"{name}.bias", (out_channels,), "bias"),
        ),
    )


def batchnorm_spec(name: str, channels: int) -> LayerSpec:
    return LayerSpec(
        name,
        "batchnorm",
        (
            ParamSpec(f"{name}.gamma", (channels,), "gamma"),
            ParamSpec(f"{name}.beta", (channels,), "beta"),
        ),
        (f"{name}.running_mean", f"{name}.running_var"),
    )


def linear_spec(name: str, in_features: int, out_features: int) -> LayerSpec:
    return LayerSpec(
        name,
        "linear",
        (
            ParamSpec(
                f"{name}.weight", (out_features, in_features), "weight", in_features
            ),
            ParamSpec(f"{name}.bias", (out_features,), "bias"),
        ),
    )


def conv_bn_specs(
    prefix: str, index: int, in_channels: int, out_channels: int
) -> List[LayerSpec]:
    """Return the specs of a 3x3 convolution followed by batch norm."""
    return [
        conv_spec(f"{prefix}.conv{index}", in_channels, out_channels, 3),
        batchnorm_spec(f"{prefix}.bn{index}", out_channels),
    ]


def fc_head_specs(
    in_features: int, nodes: int, layers: int, output_dim: int
) -> List[LayerSpec]:
    """Return the specs of the fully connected regression head."""
    plan = []
    width = in_features
    for i in range(layers):
        plan.append(linear_spec(f"fc{i}", width, nodes))
        plan.append(batchnorm_spec(f"fc{i}.bn", nodes))
        width = nodes
    plan.append(linear_spec("out", width, output_dim))
    return plan


def parameter_count(plan: List[LayerSpec]) -> int:
    """Return the number of trainable scalars of a plan."""
    return sum(layer.parameter_count for layer in plan)


def conv_bn_relu(model, name: str, x: Tensor, index: int) -> Tensor:
    """Apply ``{name}.conv{index}`` (same padding), its batch norm and ReLU."""
    conv, bn = f"{name}.conv{index}", f"{name}.bn{index}"
    x = F.conv2d(
        x, model.param(f"{conv}.weight"), model.param(f"{conv}.bias"), padding=1
    )
    x = F.batch_norm(
        x,
        model.param(f"{bn}.gamma"),
        model.param(f"{bn}.beta"),
        model.buffer(f"{bn}.running_mean"),
        model.buffer(f"{bn}.running_var"),
        model.training,
    )
    return F.relu(x)


def fc_head(model, x: Tensor, layers: int) -> Tensor:
    """Apply the fully connected head to flattened features."""
    for i in range(layers):
        x = F.linear(x, model.param(f"fc{i}.weight"), model.param(f"fc{i}.bias"))
        x = F.batch_norm(
            x,
            model.param(f"fc{i}.bn.gamma"),
            model.param(f"fc{i}.bn.beta"),
            model.buffer(f"fc{i}.bn.running_mean"),
            model.buffer(f"fc{i}.bn.running_var"),
            model.training,
        )
        x = F.relu(x)
    return F.linear(x, model.param("out.weight"), model.param("out.bias"))


def init_param(spec: ParamSpec, rng: Optional[np.random.Generator]) -> np.ndarray:
    """Draw the initial value of a parameter.

    Weights are uniform in +/- 1 / sqrt(fan_in); biases and shifts are zero; batch
    norm scales are one.
    """
    if spec.kind == "weight":
        bound = 1.0 / np.sqrt(spec.fan_in)
        return rng.uniform(-bound, bound, size=spec.shape)
    if spec.kind == "gamma":
        return np.ones(spec.shape)
    return np.zeros(spec.shape)
