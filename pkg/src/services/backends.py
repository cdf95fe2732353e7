"""Training and prediction backends.

The experiment service and the ``measure`` command talk to a :class:`Backend`. The
network backend trains the autodiff models; the ground-truth oracle backend returns
the reference masks and lengths, which exercises every step of the pipeline around a
perfect predictor.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Any, List, Optional, Sequence, Tuple

from src.data.geometry import measure_mask
from src.data.preprocess import crop_to, prepare_batch
from src.networks.bundle import ModelBundle
from src.networks.transfer import transfer_encoder_weights
from src.networks.unet import build_encoder_regressor, build_unet
from src.networks.vgg import build_vgg_regressor
from src.training.optim import OptimState
from src.training.trainer import LOSS_OF_ARCHITECTURE, Trainer, input_divisor
from src.utils.config import (
    BOTTLENECK_DROPOUT,
    DEFAULT_DEPTH,
    DESK_BASE_CHANNELS,
    FC_LAYERS,
    FC_NODES,
    METHOD_ARCHITECTURE,
    METHOD_DEW,
    METHOD_SB,
    SEGMENTATION_THRESHOLD,
)
from src.utils.exceptions import ConfigError, NoSpleenFoundError, ShapeError
from src.utils.models import (
    BinaryMask,
    RegressorConfig,
    RunConfig,
    Sample,
    TrainPlan,
    UNetConfig,
    VGGConfig,
)

logger = logging.getLogger(__name__)


@dataclass
class FittedModel:
    """A trained model (or a stand-in) for one method.

    Attributes:
        method (str): Method tag.
        model (Optional[ModelBundle]): Trained bundle; None for the oracle.
        loss_curve (List[float]): Per-epoch mean training loss.
        weight_decay (float): Weight decay used for training.
        train_case_ids (List[int]): Cases the model was trained on.
    """

    method: str
    model: Optional[ModelBundle] = None
    loss_curve: List[float] = field(default_factory=list)
    weight_decay: float = 0.0
    train_case_ids: List[int] = field(default_factory=list)


@dataclass
class Measurement:
    """Predicted length (and mask, for segmentation) of one case."""

    case_id: int
    pred_mm: float
    pred_px: float
    pred_mask: Optional[BinaryMask] = None


def measure_prediction(case_id: int, mask: BinaryMask) -> Measurement:
    """Measure a predicted mask; an empty mask measures 0 mm."""
    try:
        measurement = measure_mask(mask)
    except NoSpleenFoundError:
        logger.warning("Case %d: empty predicted mask, length set to 0", case_id)
        return Measurement(case_id, 0.0, 0.0, mask)
    return Measurement(case_id, measurement.length_mm, measurement.length_px, mask)


def pixels_to_mm(length_px: float, spacing: Tuple[float, float]) -> float:
    """Convert a regressed pixel length with the geometric mean of the spacing."""
    return float(length_px * math.sqrt(spacing[0] * spacing[1]))


class Backend(ABC):
    """Trains a method on samples and predicts lengths of unseen samples."""

    name = "abstract"

    @abstractmethod
    def fit(
        self,
        method: str,
        samples: Sequence[Sample],
        weight_decay: float,
        train_plan: TrainPlan,
        encoder_source: Optional[FittedModel] = None,
    ) -> FittedModel:
        """Train ``method`` on ``samples``.

        ``encoder_source`` is the SB model whose encoder initialises a DEW model.
        """

    @abstractmethod
    def predict(
        self, fitted: FittedModel, samples: Sequence[Sample]
    ) -> List[Measurement]:
        """Return one measurement per sample, in order."""


@dataclass
class ModelSettings:
    """Network sizes shared by every model a backend builds.

    Attributes:
        base_channels (int): Channels of the first U-Net level.
        depth (int): Downsampling blocks of the U-Net and shared encoder.
        dropout_p (float): Bottleneck dropout probability.
        fc_nodes (int): Width of the fully connected layers.
        fc_layers (int): Hidden fully connected layers.
        vgg_width_divisor (int): Factor dividing every VGG stage width.
        freeze_encoder (bool): Keep transferred DEW encoder weights fixed.
        seed (int): Weight initialisation seed.
    """

    base_channels: int = DESK_BASE_CHANNELS
    depth: int = DEFAULT_DEPTH
    dropout_p: float = BOTTLENECK_DROPOUT
    fc_nodes: int = FC_NODES
    fc_layers: int = FC_LAYERS
    vgg_width_divisor: int = 8
    freeze_encoder: bool = False
    seed: int = 0

    @classmethod
    def from_run_config(cls, config: RunConfig) -> "ModelSettings":
        return cls(
            base_channels=config.base_channels,
            depth=config.depth,
            vgg_width_divisor=config.vgg_width_divisor,
            freeze_encoder=config.freeze_encoder,
            seed=config.seed,
        )

    @property
    def unet(self) -> UNetConfig:
        return UNetConfig(
            base_channels=self.base_channels, depth=self.depth, dropout_p=self.dropout_p
        )


def _padded(shape: Tuple[int, int], divisor: int) -> Tuple[int, int]:
    return (-(-shape[0] // divisor) * divisor, -(-shape[1] // divisor) * divisor)


def model_config(
    method: str, image_shape: Tuple[int, int], settings: ModelSettings
) -> Tuple[str, Any]:
    """Return the architecture tag and configuration ``method`` uses for an image size.

    Regressors are sized for the image padded to their input divisor.
    """
    architecture = METHOD_ARCHITECTURE.get(method)
    if architecture == "SB":
        return architecture, settings.unet
    if architecture == "DE":
        encoder = settings.unet
        return architecture, RegressorConfig(
            encoder=encoder,
            input_shape=_padded(image_shape, encoder.divisor),
            fc_nodes=settings.fc_nodes,
            fc_layers=settings.fc_layers,
        )
    if architecture == "VGG":
        widths = VGGConfig.scaled(settings.vgg_width_divisor)
        return architecture, VGGConfig.scaled(
            settings.vgg_width_divisor,
            input_shape=_padded(image_shape, widths.divisor),
            fc_nodes=settings.fc_nodes,
            fc_layers=settings.fc_layers,
        )
    raise ConfigError(f"Unknown method {method!r}")


BUILDERS = {
    "SB": build_unet,
    "DE": build_encoder_regressor,
    "VGG": build_vgg_regressor,
}


def build_model(
    method: str, image_shape: Tuple[int, int], settings: ModelSettings
) -> ModelBundle:
    """Build a freshly initialised network for ``method`` and an image size."""
    architecture, cfg = model_config(method, image_shape, settings)
    return BUILDERS[architecture](cfg, settings.seed)


class NetworkBackend(Backend):
    """Backend training the autodiff networks.

    Attributes:
        settings (ModelSettings): Network sizes and initialisation seed.
    """

    name = "network"

    def __init__(self, settings: Optional[ModelSettings] = None):
        self.settings = settings or ModelSettings()

    @staticmethod
    def _image_shape(samples: Sequence[Sample]) -> Tuple[int, int]:
        shapes = {s.image.shape for s in samples}
        if len(shapes) != 1:
            raise ShapeError(f"All images must share one size, got {sorted(shapes)}")
        return shapes.pop()

    def fit(
        self,
        method: str,
        samples: Sequence[Sample],
        weight_decay: float,
        train_plan: TrainPlan,
        encoder_source: Optional[FittedModel] = None,
    ) -> FittedModel:
        model = build_model(method, self._image_shape(samples), self.settings)
        if method == METHOD_DEW:
            if encoder_source is None or encoder_source.model is None:
                raise ConfigError(
                    "DEW needs a trained SB model to initialise its encoder"
                )
            transfer_encoder_weights(
                encoder_source.model, model, freeze=self.settings.freeze_encoder
            )
        model.metadata["method"] = method
        plan = replace(train_plan, loss=LOSS_OF_ARCHITECTURE[model.architecture])
        optim = OptimState(learning_rate=plan.learning_rate, weight_decay=weight_decay)
        result = Trainer(plan).train(model, samples, optim)
        return FittedModel(
            method=method,
            model=result.model,
            loss_curve=result.loss_curve,
            weight_decay=weight_decay,
            train_case_ids=[int(s.case_id) for s in samples],
        )

    def predict(
        self, fitted: FittedModel, samples: Sequence[Sample]
    ) -> List[Measurement]:
        return predict_with_model(fitted.model, samples)


def predict_with_model(
    model: ModelBundle, samples: Sequence[Sample], batch_size: int = 8
) -> List[Measurement]:
    """Run a trained bundle on samples and turn its outputs into lengths.

    Segmentation maps are thresholded, cropped to the image and measured;
    regressed pixel lengths are converted with the image spacing.
    """
    divisor = input_divisor(model)
    results: List[Measurement] = []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        outputs = model.predict(prepare_batch([s.image for s in chunk], divisor))
        for sample, out in zip(chunk, outputs):
            if model.architecture == METHOD_SB:
                bits = crop_to(out, sample.image.shape) > SEGMENTATION_THRESHOLD
                results.append(
                    measure_prediction(
                        sample.case_id, BinaryMask(bits, sample.image.spacing)
                    )
                )
            else:
                px = float(out)
                results.append(
                    Measurement(
                        sample.case_id, pixels_to_mm(px, sample.image.spacing), px
                    )
                )
    return results


class OracleBackend(Backend):
    """Perfect predictor: reference masks for SB, reference lengths for every method.

    With ``measure_masks`` the SB lengths are instead measured from the reference
    masks with :func:`measure_mask`, which checks the geometry against the stored
    lengths.
    """

    name = "oracle"

    def __init__(self, measure_masks: bool = False):
        self.measure_masks = measure_masks

    def fit(
        self,
        method: str,
        samples: Sequence[Sample],
        weight_decay: float,
        train_plan: TrainPlan,
        encoder_source: Optional[FittedModel] = None,
    ) -> FittedModel:
        return FittedModel(
            method=method,
            weight_decay=weight_decay,
            train_case_ids=[int(s.case_id) for s in samples],
        )

    def predict(
        self, fitted: FittedModel, samples: Sequence[Sample]
    ) -> List[Measurement]:
        results = []
        for s in samples:
            if fitted.method == METHOD_SB:
                if s.mask is None:
                    raise ConfigError(f"Case {s.case_id} has no reference mask")
                if self.measure_masks:
                    results.append(measure_prediction(s.case_id, s.mask.copy()))
                    continue
                results.append(
                    Measurement(
                        s.case_id,
                        float(s.length_mm),
                        float(s.length_px),
                        s.mask.copy(),
                    )
                )
            else:
                results.append(
                    Measurement(s.case_id, float(s.length_mm), float(s.length_px))
                )
        return results


def make_backend(config: RunConfig) -> Backend:
    """Return the backend named by ``config.backend``."""
    if config.backend == OracleBackend.name:
        return OracleBackend()
    if config.backend == NetworkBackend.name:
        return NetworkBackend(ModelSettings.from_run_config(config))
    raise ConfigError(f"Unknown backend {config.backend!r}")
