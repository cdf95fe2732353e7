"""Data models for the spleen length toolkit.

This module contains the data classes used to structure and exchange data between the
packages: images and masks, phantom samples, measurements, model and training
configurations, cross-validation plans, evaluation results and run configuration.
"""

import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.utils.config import (
    BOTTLENECK_DROPOUT,
    DEFAULT_BATCH_SIZE,
    DEFAULT_DEPTH,
    DEFAULT_EPOCHS,
    DEFAULT_IMAGE_SHAPE,
    DESK_BASE_CHANNELS,
    DESK_LEARNING_RATE,
    EQUALIZATION_CLIP,
    EQUALIZATION_PROBABILITY,
    EQUALIZATION_TILES,
    FC_LAYERS,
    FC_NODES,
    GAMMA_RANGE,
    GROUPING_BY_CASE,
    GROUPING_BY_PATIENT,
    METHODS,
    PHANTOM_COUNT,
    PHANTOM_MAX_CASES_PER_PATIENT,
    PHANTOM_PATIENTS,
    ROTATION_RANGE,
    VGG_STAGE_CONVS,
    VGG_STAGE_WIDTHS,
    WEIGHT_DECAY_GRID,
)
from src.utils.exceptions import ConfigError, ShapeError


def _check_spacing(spacing: Tuple[float, float]) -> Tuple[float, float]:
    spacing = (float(spacing[0]), float(spacing[1]))
    if not (spacing[0] > 0 and spacing[1] > 0):
        raise ConfigError(f"Pixel spacing must be positive, got {spacing}")
    return spacing


@dataclass(eq=False)
class GrayImage:
    """Two-dimensional intensity image with physical pixel spacing.

    Attributes:
        pixels (np.ndarray): Float64 array of shape (H, W), intensities in [0, 1].
        spacing (Tuple[float, float]): Pixel size (sy, sx) in millimetres.
    """

    pixels: np.ndarray
    spacing: Tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 2:  # noqa: PLR2004
            raise ShapeError(f"Image must be 2-D, got shape {self.pixels.shape}")
        self.spacing = _check_spacing(self.spacing)

    @property
    def shape(self) -> Tuple[int, int]:
        """Return (height, width)."""
        return self.pixels.shape

    def copy(self) -> "GrayImage":
        """Return a deep copy of the image."""
        return GrayImage(self.pixels.copy(), self.spacing)


@dataclass(eq=False)
class BinaryMask:
    """Boolean mask of spleen pixels with physical pixel spacing.

    Attributes:
        bits (np.ndarray): Boolean array of shape (H, W).
        spacing (Tuple[float, float]): Pixel size (sy, sx) in millimetres.
    """

    bits: np.ndarray
    spacing: Tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        self.bits = np.asarray(self.bits).astype(bool)
        if self.bits.ndim != 2:  # noqa: PLR2004
            raise ShapeError(f"Mask must be 2-D, got shape {self.bits.shape}")
        self.spacing = _check_spacing(self.spacing)

    @property
    def shape(self) -> Tuple[int, int]:
        """Return (height, width)."""
        return self.bits.shape

    @property
    def count(self) -> int:
        """Return the number of foreground pixels."""
        return int(self.bits.sum())

    @property
    def is_empty(self) -> bool:
        """Return True when no pixel is set."""
        return not self.bits.any()

    def copy(self) -> "BinaryMask":
        """Return a deep copy of the mask."""
        return BinaryMask(self.bits.copy(), self.spacing)


@dataclass(eq=False)
class Sample:
    """One phantom or imported case.

    Attributes:
        image (GrayImage): Ultrasound-like image.
        mask (Optional[BinaryMask]): Ground-truth spleen mask, when available.
        length_mm (float): Ground-truth spleen length in millimetres.
        length_px (float): Ground-truth spleen length in pixels.
        patient_id (int): Patient the case belongs to.
        case_id (int): Unique case identifier.
        annotation (Optional[BinaryMask]): Pixels covered by burned-in calipers.
    """

    image: GrayImage
    mask: Optional[BinaryMask]
    length_mm: float
    length_px: float
    patient_id: int
    case_id: int
    annotation: Optional[BinaryMask] = None


@dataclass(frozen=True)
class AxisMeasurement:
    """Principal axis and projection-range length of a mask.

    Attributes:
        centroid (Tuple[float, float]): Centroid (row, col) in pixels.
        axis (Tuple[float, float]): Unit principal axis (row, col) in millimetre space.
        length_px (float): Projection range computed with unit spacing.
        length_mm (float): Projection range in millimetres.
        projection_range_mm (Tuple[float, float]): Minimum and maximum projection of
            the pixel centres, relative to the centroid, in millimetres.
    """

    centroid: Tuple[float, float]
    axis: Tuple[float, float]
    length_px: float = 0.0
    length_mm: float = 0.0
    projection_range_mm: Tuple[float, float] = (0.0, 0.0)


@dataclass
class UNetConfig:
    """Configuration of the segmentation U-Net and of the shared encoder.

    Attributes:
        in_channels (int): Number of input channels.
        base_channels (int): Channels of the first encoder level.
        depth (int): Number of downsampling blocks.
        dropout_p (float): Dropout probability applied to the bottleneck.
    """

    in_channels: int = 1
    base_channels: int = DESK_BASE_CHANNELS
    depth: int = DEFAULT_DEPTH
    dropout_p: float = BOTTLENECK_DROPOUT

    def validate(self) -> "UNetConfig":
        """Raise ConfigError when the configuration is invalid."""
        if self.in_channels < 1 or self.base_channels < 1:
            raise ConfigError("Channel counts must be positive")
        if self.depth < 1:
            raise ConfigError(f"U-Net depth must be >= 1, got {self.depth}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(
                f"Dropout probability must be in [0, 1), got {self.dropout_p}"
            )
        return self

    def channels(self, level: int) -> int:
        """Return the channel count of an encoder level (depth is the bottleneck)."""
        return self.base_channels * 2**level

    @property
    def divisor(self) -> int:
        """Return the factor input dimensions must be divisible by."""
        return 2**self.depth

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-serialisable dictionary."""
        return asdict(self)


@dataclass
class RegressorConfig:
    """Configuration of the encoder-regressor (DE / DEW).

    Attributes:
        encoder (UNetConfig): Encoder configuration, shared with the U-Net.
        input_shape (Tuple[int, int]): Input height and width.
        fc_nodes (int): Width of the fully connected layers.
        fc_layers (int): Number of hidden fully connected layers.
        output_dim (int): Number of regressed values.
    """

    encoder: UNetConfig = field(default_factory=UNetConfig)
    input_shape: Tuple[int, int] = DEFAULT_IMAGE_SHAPE
    fc_nodes: int = FC_NODES
    fc_layers: int = FC_LAYERS
    output_dim: int = 1

    def validate(self) -> "RegressorConfig":
        """Raise ConfigError when the configuration is invalid."""
        self.encoder.validate()
        _check_divisible(self.input_shape, self.encoder.divisor)
        if self.fc_nodes < 1 or self.fc_layers < 1 or self.output_dim < 1:
            raise ConfigError("Fully connected sizes must be positive")
        return self

    @property
    def paper_faithful(self) -> bool:
        """Return True when the head matches the published one."""
        return self.fc_layers == FC_LAYERS and self.fc_nodes == FC_NODES

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-serialisable dictionary."""
        return asdict(self)


@dataclass
class VGGConfig:
    """Configuration of the VGG-19 style regressor.

    Attributes:
        in_channels (int): Number of input channels.
        stage_widths (Tuple[int, ...]): Output channels of each stage.
        stage_convs (Tuple[int, ...]): Number of 3x3 convolutions per stage.
        input_shape (Tuple[int, int]): Input height and width.
        fc_nodes (int): Width of the fully connected layers.
        fc_layers (int): Number of hidden fully connected layers.
        output_dim (int): Number of regressed values.
    """

    in_channels: int = 1
    stage_widths: Tuple[int, ...] = VGG_STAGE_WIDTHS
    stage_convs: Tuple[int, ...] = VGG_STAGE_CONVS
    input_shape: Tuple[int, int] = DEFAULT_IMAGE_SHAPE
    fc_nodes: int = FC_NODES
    fc_layers: int = FC_LAYERS
    output_dim: int = 1

    @classmethod
    def scaled(cls, divisor: int, **kwargs) -> "VGGConfig":
        """Build a narrower plan by dividing every stage width by ``divisor``."""
        widths = tuple(max(1, w // divisor) for w in VGG_STAGE_WIDTHS)
        return cls(stage_widths=widths, **kwargs)

    def validate(self) -> "VGGConfig":
        """Raise ConfigError when the configuration is invalid."""
        if len(self.stage_widths) != len(self.stage_convs):
            raise ConfigError("stage_widths and stage_convs must have equal length")
        if any(v < 1 for v in (*self.stage_widths, *self.stage_convs)):
            raise ConfigError("Stage widths and conv counts must be positive")
        _check_divisible(self.input_shape, self.divisor)
        return self

    @property
    def divisor(self) -> int:
        """Return the factor input dimensions must be divisible by."""
        return 2 ** len(self.stage_widths)

    @property
    def conv_plan(self) -> List[Tuple[int, int, int]]:
        """Return (stage, in_channels, out_channels) for every convolution."""
        plan = []
        channels = self.in_channels
        for stage, (width, n_convs) in enumerate(
            zip(self.stage_widths, self.stage_convs)
        ):
            for _ in range(n_convs):
                plan.append((stage, channels, width))
                channels = width
        return plan

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-serialisable dictionary."""
        return asdict(self)


def _check_divisible(shape: Tuple[int, int], divisor: int):
    if len(shape) != 2 or any(s < 1 or s % divisor for s in shape):  # noqa: PLR2004
        raise ConfigError(f"Input shape {tuple(shape)} must be divisible by {divisor}")


@dataclass
class AugmentationSpec:
    """Random train-time augmentation parameters.

    Attributes:
        rotation_range (Tuple[float, float]): Rotation angle range in degrees.
        gamma_range (Tuple[float, float]): Gamma correction exponent range.
        equalization_probability (float): Probability of adaptive equalisation.
        tiles (int): Tiles per axis used by adaptive equalisation.
        clip (float): Clip limit of adaptive equalisation.
        paper_faithful (bool): Restrict rotations to 20 degrees in magnitude.
    """

    rotation_range: Tuple[float, float] = ROTATION_RANGE
    gamma_range: Tuple[float, float] = GAMMA_RANGE
    equalization_probability: float = EQUALIZATION_PROBABILITY
    tiles: int = EQUALIZATION_TILES
    clip: float = EQUALIZATION_CLIP
    paper_faithful: bool = False

    @classmethod
    def identity(cls) -> "AugmentationSpec":
        """Return a spec that leaves every sample unchanged."""
        return cls(
            rotation_range=(0.0, 0.0),
            gamma_range=(1.0, 1.0),
            equalization_probability=0.0,
        )

    def validate(self) -> "AugmentationSpec":
        """Raise ConfigError when the spec is invalid."""
        low, high = self.rotation_range
        limit = 20.0 if self.paper_faithful else 45.0
        if low > high or max(abs(low), abs(high)) > limit:
            raise ConfigError(
                f"Rotation range {self.rotation_range} exceeds {limit} degrees"
            )
        if not 0 < self.gamma_range[0] <= self.gamma_range[1]:
            raise ConfigError(f"Invalid gamma range {self.gamma_range}")
        if not 0.0 <= self.equalization_probability <= 1.0:
            raise ConfigError("Equalisation probability must be in [0, 1]")
        if self.tiles < 1 or self.clip <= 0:
            raise ConfigError("Equalisation tiles and clip limit must be positive")
        return self

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-serialisable dictionary."""
        return asdict(self)


@dataclass
class TrainPlan:
    """Training schedule.

    Attributes:
        epochs (int): Number of passes over the dataset.
        batch_size (int): Samples per optimiser step; the last short batch is kept.
        seed (int): Seed of shuffling, dropout and augmentation streams.
        augment (bool): Apply train-time augmentation.
        loss (str): ``"dice"`` for segmentation, ``"mse"`` for regression.
        learning_rate (float): Adam learning rate.
        augmentation (AugmentationSpec): Augmentation parameters.
        standardize_targets (bool): Regress standardised lengths internally.
    """

    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    seed: int = 0
    augment: bool = True
    loss: str = "dice"
    learning_rate: float = DESK_LEARNING_RATE
    augmentation: AugmentationSpec = field(default_factory=AugmentationSpec)
    standardize_targets: bool = True

    def validate(self) -> "TrainPlan":
        """Raise ConfigError when the plan is invalid."""
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.loss not in ("dice", "mse"):
            raise ConfigError(f"Unknown loss kind {self.loss!r}")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        self.augmentation.validate()
        return self

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-serialisable dictionary."""
        return asdict(self)


@dataclass
class PhantomConfig:
    """Synthetic phantom generator configuration.

    Attributes:
        height (int): Image height in pixels.
        width (int): Image width in pixels.
        spacing (Tuple[float, float]): Pixel size (sy, sx) in millimetres.
        semi_major_range (Tuple[float, float]): Semi-major axis range in pixels.
        semi_minor_range (Tuple[float, float]): Semi-minor axis range in pixels.
        bend_range (Tuple[float, float]): Range of the bean-shape bend factor.
        rotation_range (Tuple[float, float]): Orientation range in degrees.
        contrast (float): Intensity step between spleen and the fat band.
        speckle (float): Variance of the mean-one multiplicative speckle.
        fat_band_px (float): Width of the fat band hugging the spleen.
        attenuation (float): Fractional intensity loss from top to bottom.
        calipers (bool): Burn caliper crosses at the length endpoints.
        count (int): Number of cases.
        n_patients (Optional[int]): Number of patients; derived from count if None.
        seed (int): Master seed.
    """

    height: int = DEFAULT_IMAGE_SHAPE[0]
    width: int = DEFAULT_IMAGE_SHAPE[1]
    spacing: Tuple[float, float] = (1.5, 1.5)
    semi_major_range: Tuple[float, float] = (20.0, 34.0)
    semi_minor_range: Tuple[float, float] = (8.0, 13.0)
    bend_range: Tuple[float, float] = (0.0, 0.25)
    rotation_range: Tuple[float, float] = (-30.0, 30.0)
    contrast: float = 0.2
    speckle: float = 0.05
    fat_band_px: float = 3.0
    attenuation: float = 0.3
    calipers: bool = False
    count: int = PHANTOM_COUNT
    n_patients: Optional[int] = None
    seed: int = 0

    def validate(self) -> "PhantomConfig":
        """Raise ConfigError when the configuration is invalid."""
        if self.count < 1:
            raise ConfigError(f"count must be >= 1, got {self.count}")
        if self.height < 8 or self.width < 8:  # noqa: PLR2004
            raise ConfigError("Phantom images must be at least 8x8 pixels")
        _check_spacing(self.spacing)
        a_low, a_high = self.semi_major_range
        b_low, b_high = self.semi_minor_range
        if not 0 < b_low <= b_high < a_low <= a_high:
            raise ConfigError(
                "Semi-axis ranges must satisfy 0 < b <= b_max < a_min <= a"
            )
        if 2 * a_high >= max(self.height, self.width):
            raise ConfigError("Semi-major axis range does not fit in the image")
        if self.contrast <= 0:
            raise ConfigError(f"contrast must be > 0, got {self.contrast}")
        if self.speckle < 0 or self.fat_band_px < 0 or not 0 <= self.attenuation < 1:
            raise ConfigError("speckle, fat_band_px and attenuation out of range")
        n_patients = self.patients
        fewest = math.ceil(self.count / PHANTOM_MAX_CASES_PER_PATIENT)
        if not fewest <= n_patients <= self.count:
            raise ConfigError(
                f"{n_patients} patients cannot hold {self.count} cases "
                f"with at most {PHANTOM_MAX_CASES_PER_PATIENT} cases each"
            )
        return self

    @property
    def patients(self) -> int:
        """Return the number of patients, mimicking 108 cases from 93 patients."""
        if self.n_patients is not None:
            return self.n_patients
        derived = round(self.count * PHANTOM_PATIENTS / PHANTOM_COUNT)
        minimum = math.ceil(self.count / PHANTOM_MAX_CASES_PER_PATIENT)
        return int(min(self.count, max(minimum, derived, 1)))

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-serialisable dictionary."""
        return asdict(self)


@dataclass
class MetricsReport:
    """Evaluation measures of one method.

    Attributes:
        method (str): Method tag.
        ple_percent (float): Percentage length error.
        pearson_r (float): Pearson correlation between predictions and ground truth.
        n_cases (int): Number of evaluated cases.
        dice (Optional[float]): Mean Dice (segmentation only).
        hausdorff_mm (Optional[float]): Mean Hausdorff distance (segmentation only).
        n_hd_excluded (int): Cases without a Hausdorff distance (empty prediction).
    """

    method: str
    ple_percent: float
    pearson_r: float
    n_cases: int
    dice: Optional[float] = None
    hausdorff_mm: Optional[float] = None
    n_hd_excluded: int = 0

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-serialisable dictionary without absent fields."""
        return {k: v for k, v in asdict(self).items() if v is not None}

    def to_row(self) -> Dict[str, Any]:
        """Return the summary table row (PLE, R, Dice, HD)."""
        return {
            "PLE": self.ple_percent,
            "R": self.pearson_r,
            "Dice": self.dice,
            "HD": self.hausdorff_mm,
        }


@dataclass
class FoldPlan:
    """Nested cross-validation assignment of case ids.

    Attributes:
        outer (List[List[int]]): Test case ids of each outer fold.
        inner (List[List[List[int]]]): For each outer fold, the inner folds of its
            training cases.
        grouping (str): ``"patient"`` or ``"case"``.
        seed (int): Seed used to shuffle the assignment.
    """

    outer: List[List[int]]
    inner: List[List[List[int]]]
    grouping: str = GROUPING_BY_PATIENT
    seed: int = 0

    def outer_train(self, fold: int) -> List[int]:
        """Return the training case ids of an outer fold."""
        return sorted(
            case for k, ids in enumerate(self.outer) if k != fold for case in ids
        )

    def inner_split(self, fold: int, inner_fold: int) -> Tuple[List[int], List[int]]:
        """Return (train ids, validation ids) of an inner fold."""
        folds = self.inner[fold]
        train = sorted(
            case for k, ids in enumerate(folds) if k != inner_fold for case in ids
        )
        return train, sorted(folds[inner_fold])

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-serialisable dictionary."""
        return asdict(self)


@dataclass
class CasePrediction:
    """Prediction of one method for one held-out case.

    Attributes:
        case_id (int): Case identifier.
        method (str): Method tag.
        fold (int): Outer fold in which the case was tested.
        pred_mm (float): Predicted length in millimetres.
        gt_mm (float): Ground-truth length in millimetres.
        pred_mask (Optional[BinaryMask]): Predicted mask (segmentation only).
        dice (Optional[float]): Dice against the ground-truth mask.
        hausdorff_mm (Optional[float]): Hausdorff distance to the ground-truth mask.
    """

    case_id: int
    method: str
    fold: int
    pred_mm: float
    gt_mm: float
    pred_mask: Optional[BinaryMask] = None
    dice: Optional[float] = None
    hausdorff_mm: Optional[float] = None


@dataclass
class MethodResult:
    """Outcome of the nested cross-validation for one method.

    Attributes:
        method (str): Method tag.
        chosen_decays (Dict[int, float]): Selected weight decay per outer fold.
        inner_scores (Dict[int, Dict[float, float]]): Mean inner PLE per grid value.
        predictions (List[CasePrediction]): Held-out predictions.
        report (Optional[MetricsReport]): Metrics over pooled predictions.
        loss_curves (Dict[int, List[float]]): Final-model loss curve per outer fold.
        status (str): ``"complete"`` or ``"partial"``.
        error (Optional[str]): Failure message of a partial run.
    """

    method: str
    chosen_decays: Dict[int, float] = field(default_factory=dict)
    inner_scores: Dict[int, Dict[float, float]] = field(default_factory=dict)
    predictions: List[CasePrediction] = field(default_factory=list)
    report: Optional[MetricsReport] = None
    loss_curves: Dict[int, List[float]] = field(default_factory=dict)
    status: str = "complete"
    error: Optional[str] = None


@dataclass
class RunConfig:
    """Resolved configuration of one command-line invocation.

    Attributes mirror the command-line flags; see ``main.py`` for their meaning.
    """

    command: str
    dataset_dir: Optional[Path] = None
    output_dir: Path = Path("out")
    seed: int = 0
    threads: Optional[int] = None
    paper_faithful: bool = False
    methods: List[str] = field(default_factory=lambda: list(METHODS))
    method: str = "SB"
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    learning_rate: float = DESK_LEARNING_RATE
    weight_decay: float = 0.0
    weight_decay_grid: List[float] = field(
        default_factory=lambda: list(WEIGHT_DECAY_GRID)
    )
    base_channels: int = DESK_BASE_CHANNELS
    depth: int = DEFAULT_DEPTH
    vgg_width_divisor: int = 8
    image_shape: Tuple[int, int] = DEFAULT_IMAGE_SHAPE
    count: int = PHANTOM_COUNT
    n_patients: Optional[int] = None
    contrast: float = 0.2
    speckle: float = 0.05
    calipers: bool = False
    grouping: str = GROUPING_BY_PATIENT
    rotation_range: Tuple[float, float] = ROTATION_RANGE
    augment: bool = True
    r_mode: str = "pooled"
    freeze_encoder: bool = False
    checkpoint: Optional[Path] = None
    init_from: Optional[Path] = None
    backend: str = "network"
    image: Optional[Path] = None
    defect_mask: Optional[Path] = None
    inpaint_method: str = "direct"
    pdf: bool = False

    @classmethod
    def field_names(cls) -> List[str]:
        """Return the names of all configurable fields."""
        return [f.name for f in fields(cls)]

    def validate(self) -> "RunConfig":
        """Raise ConfigError when values are inconsistent."""
        if self.count < 1:
            raise ConfigError(f"--count must be >= 1, got {self.count}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("--epochs must be >= 0 and --batch-size >= 1")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("--threads must be >= 1")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown or self.method not in METHODS:
            raise ConfigError(f"Unknown method(s): {unknown or [self.method]}")
        if self.grouping not in (GROUPING_BY_PATIENT, GROUPING_BY_CASE):
            raise ConfigError(f"Unknown grouping {self.grouping!r}")
        if self.r_mode not in ("pooled", "fold_mean"):
            raise ConfigError(f"Unknown r_mode {self.r_mode!r}")
        if self.backend not in ("network", "oracle"):
            raise ConfigError(f"Unknown backend {self.backend!r}")
        if not self.weight_decay_grid:
            raise ConfigError("The weight decay grid must not be empty")
        return self
