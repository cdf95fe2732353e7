"""Model bundles and the architecture registry.

A :class:`ModelBundle` holds the named parameters and batch-norm buffers of one network
together with its architecture tag and configuration snapshot. Forward passes are
looked up in :data:`ARCHITECTURES`, which the builders in ``unet`` and ``vgg`` fill
when the package is imported.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Set, Union

import numpy as np
import pandas as pd

from src.networks.layers import LayerSpec, init_param, parameter_count
from src.nn.checkpoint import load_checkpoint, save_checkpoint
from src.nn.tensor import Tensor, no_grad
from src.utils.exceptions import CheckpointError, ConfigError, ShapeError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Architecture:
    """Registry entry tying a tag to its plan, forward pass and config parser.

    Attributes:
        tag (str): ``SB``, ``DE`` or ``VGG``.
        layer_plan (Callable): Config -> list of layer specs.
        forward (Callable): (bundle, input tensor, rng) -> output tensor.
        config_from_dict (Callable): Rebuilds the config from ``to_dict`` output.
    """

    tag: str
    layer_plan: Callable[[Any], List[LayerSpec]]
    forward: Callable[["ModelBundle", Tensor, Optional[np.random.Generator]], Tensor]
    config_from_dict: Callable[[Dict[str, Any]], Any]


ARCHITECTURES: Dict[str, Architecture] = {}


def register_architecture(architecture: Architecture) -> Architecture:
    ARCHITECTURES[architecture.tag] = architecture
    return architecture


def get_architecture(tag: str) -> Architecture:
    try:
        return ARCHITECTURES[tag]
    except KeyError as e:
        raise ConfigError(f"Unknown architecture {tag!r}") from e


class ModelBundle:
    """Parameters, buffers and configuration of one network.

    Attributes:
        architecture (str): Architecture tag.
        config: Configuration dataclass snapshot.
        plan (List[LayerSpec]): Layer plan the parameters were allocated from.
        params (Dict[str, Tensor]): Trainable tensors by unique name, in plan order.
        buffers (Dict[str, np.ndarray]): Batch-norm running statistics.
        metadata (Dict[str, Any]): Free-form provenance (seed, target scaling, ...).
        frozen (Set[str]): Parameters excluded from optimiser updates.
        training (bool): Training mode flag (batch statistics, dropout).
    """

    def __init__(  # noqa: PLR0913
        self,
        architecture: str,
        config: Any,
        plan: List[LayerSpec],
        params: Dict[str, Tensor],
        buffers: Dict[str, np.ndarray],
        metadata: Optional[Dict[str, Any]] = None,
    ):
        self.architecture = architecture
        self.config = config
        self.plan = plan
        self.params = params
        self.buffers = buffers
        self.metadata = dict(metadata or {})
        self.frozen: Set[str] = set()
        self.training = False

    @classmethod
    def from_plan(
        cls, architecture: str, config: Any, plan: List[LayerSpec], seed: int = 0
    ) -> "ModelBundle":
        """Allocate and initialise every parameter of ``plan``."""
        rng = np.random.default_rng(seed)
        params: Dict[str, Tensor] = {}
        buffers: Dict[str, np.ndarray] = {}
        for layer in plan:
            for spec in layer.params:
                if spec.name in params:
                    raise ConfigError(f"Duplicate parameter name {spec.name!r}")
                params[spec.name] = Tensor(
                    init_param(spec, rng), requires_grad=True, name=spec.name
                )
            for name in layer.buffers:
                channels = layer.params[0].shape[0]
                fill = np.ones if name.endswith("running_var") else np.zeros
                buffers[name] = fill(channels)
        bundle = cls(architecture, config, plan, params, buffers, {"init_seed": seed})
        logger.debug("Built %s with %d parameters", architecture, bundle.num_parameters)
        return bundle

    def param(self, name: str) -> Tensor:
        return self.params[name]

    def buffer(self, name: str) -> np.ndarray:
        return self.buffers[name]

    @property
    def num_parameters(self) -> int:
        return int(sum(t.size for t in self.params.values()))

    def trainable_parameters(self) -> Dict[str, Tensor]:
        """Return the parameters updated by the optimiser."""
        return {k: v for k, v in self.params.items() if k not in self.frozen}

    def train(self) -> "ModelBundle":
        self.training = True
        return self

    def eval(self) -> "ModelBundle":
        self.training = False
        return self

    def zero_grad(self):
        for tensor in self.params.values():
            tensor.zero_grad()

    def forward(
        self, x: Union[Tensor, np.ndarray], rng: Optional[np.random.Generator] = None
    ) -> Tensor:
        """Run the forward pass of the registered architecture on (N, C, H, W) input."""
        if not isinstance(x, Tensor):
            x = Tensor(x)
        if x.ndim != 4:  # noqa: PLR2004
            raise ShapeError(f"Network input must be (N, C, H, W), got {x.shape}")
        return get_architecture(self.architecture).forward(self, x, rng)

    def predict(self, batch: np.ndarray) -> np.ndarray:
        """Evaluate the network on a prepared batch without recording a graph.

        Args:
            batch (np.ndarray): Network input of shape (N, 1, H, W).

        Returns:
            np.ndarray: Probability maps (N, H, W) for segmentation, lengths in pixels
                (N,) for regression.
        """
        was_training = self.training
        self.eval()
        try:
            with no_grad():
                out = self.forward(Tensor(batch)).data
        finally:
            self.training = was_training
        if self.architecture == "SB":
            return out[:, 0]
        mean = self.metadata.get("target_mean", 0.0)
        std = self.metadata.get("target_std", 1.0)
        return out[:, 0] * std + mean

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Return copies of every parameter and buffer by name."""
        state = {name: t.data.copy() for name, t in self.params.items()}
        state.update({name: b.copy() for name, b in self.buffers.items()})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        """Copy values into existing parameters and buffers.

        Raises:
            CheckpointError: On missing, unexpected or mis-shaped entries.
        """
        expected = set(self.params) | set(self.buffers)
        missing, unexpected = expected - set(state), set(state) - expected
        if missing or unexpected:
            raise CheckpointError(
                f"State mismatch: missing {sorted(missing)[:5]}, "
                f"unexpected {sorted(unexpected)[:5]}"
            )
        for name, value in state.items():
            target = (
                self.params[name].data if name in self.params else self.buffers[name]
            )
            if target.shape != value.shape:
                raise CheckpointError(f"{name}: shape {value.shape} != {target.shape}")
            target[...] = value

    def save(self, path: Union[str, Path]) -> Path:
        """Write a bit-exact checkpoint."""
        metadata = {
            "architecture": self.architecture,
            "config": self.config.to_dict(),
            "frozen": sorted(self.frozen),
            "extra": self.metadata,
        }
        return save_checkpoint(path, self.state_dict(), metadata)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ModelBundle":
        """Rebuild a bundle from a checkpoint written by :meth:`save`."""
        arrays, metadata = load_checkpoint(path)
        try:
            architecture = get_architecture(metadata["architecture"])
            config = architecture.config_from_dict(metadata["config"])
        except (KeyError, TypeError, ConfigError) as e:
            raise CheckpointError(
                f"Checkpoint {path} has no usable model description"
            ) from e
        bundle = cls.from_plan(
            architecture.tag, config, architecture.layer_plan(config)
        )
        bundle.load_state_dict(arrays)
        bundle.metadata = dict(metadata.get("extra", {}))
        bundle.frozen = set(metadata.get("frozen", []))
        return bundle

    def describe(self) -> pd.DataFrame:
        """Return the per-parameter table (name, shape, parameters)."""
        return describe_plan(self.plan)


def describe_plan(plan: List[LayerSpec]) -> pd.DataFrame:
    """Return one row per parameter tensor of a plan, without allocating it."""
    rows = [
        {
            "layer": layer.name,
            "kind": layer.kind,
            "name": spec.name,
            "shape": "x".join(str(s) for s in spec.shape),
            "parameters": spec.size,
        }
        for layer in plan
        for spec in layer.params
    ]
    return pd.DataFrame(rows, columns=["layer", "kind", "name", "shape", "parameters"])


def plan_parameter_count(tag: str, config: Any) -> int:
    """Return the parameter count of an architecture from its configuration alone."""
    return parameter_count(get_architecture(tag).layer_plan(config))
