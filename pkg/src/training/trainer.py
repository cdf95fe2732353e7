"""Training loop.

Samples are shuffled once per epoch with a generator keyed by (seed, epoch) and
augmented with generators keyed by (seed, epoch, sample index), so a run is a pure
function of its seed.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.data.preprocess import augment, prepare_batch, prepare_masks
from src.networks.bundle import ModelBundle
from src.training.losses import dice_loss, mse_loss
from src.training.optim import OptimState, adam_step
from src.utils.config import METHOD_SB, MIN_REGRESSOR_TRAINING_CASES
from src.utils.exceptions import (
    ConfigError,
    DatasetError,
    NonFiniteError,
    TrainingDivergedError,
)
from src.utils.logging_setup import progress_enabled
from src.utils.models import Sample, TrainPlan

logger = logging.getLogger(__name__)

LOSS_OF_ARCHITECTURE = {"SB": "dice", "DE": "mse", "VGG": "mse"}
_DROPOUT_STREAM = 1


@dataclass
class TrainResult:
    """Trained model and its per-epoch mean training loss.

    Attributes:
        model (ModelBundle): The trained bundle (left in evaluation mode).
        loss_curve (List[float]): Mean training loss of each epoch.
        plan (TrainPlan): Plan used for training.
        weight_decay (float): Weight decay of the optimiser.
    """

    model: ModelBundle
    loss_curve: List[float] = field(default_factory=list)
    plan: Optional[TrainPlan] = None
    weight_decay: float = 0.0


def input_divisor(model: ModelBundle) -> int:
    """Return the factor network inputs are zero-padded to."""
    if model.architecture == "DE":
        return model.config.encoder.divisor
    return model.config.divisor


class Trainer:
    """Trains one model bundle on a list of samples.

    Attributes:
        plan (TrainPlan): Training schedule.
    """

    def __init__(self, plan: TrainPlan):
        self.plan = plan.validate()

    def _batches(self, n: int, epoch: int, merge_singleton: bool) -> List[np.ndarray]:
        order = np.random.default_rng([self.plan.seed, epoch]).permutation(n)
        size = self.plan.batch_size
        batches = [order[i : i + size] for i in range(0, n, size)]
        # fully connected batch norm needs two samples per batch
        if merge_singleton and len(batches) > 1 and batches[-1].size == 1:
            batches[-2] = np.concatenate(batches[-2:])
            batches.pop()
        return batches

    def _targets(self, model: ModelBundle, samples: Sequence[Sample]) -> np.ndarray:
        lengths = np.array([s.length_px for s in samples], dtype=np.float64)
        if self.plan.standardize_targets:
            mean = float(lengths.mean())
            std = float(lengths.std()) if lengths.size > 1 else 1.0
            std = std if std > 1e-12 else 1.0  # noqa: PLR2004
        else:
            mean, std = 0.0, 1.0
        model.metadata["target_mean"] = mean
        model.metadata["target_std"] = std
        return (lengths - mean) / std

    def train(
        self, model: ModelBundle, dataset: Sequence[Sample], optim: OptimState
    ) -> TrainResult:
        """Train ``model`` in place.

        Args:
            model (ModelBundle): Bundle to train.
            dataset (Sequence[Sample]): Training samples.
            optim (OptimState): Optimiser state.

        Returns:
            TrainResult: The model and its loss curve.

        Raises:
            DatasetError: If the dataset is empty or lacks masks for segmentation.
            ConfigError: If the loss kind does not match the architecture, or a
                regressor gets a single sample.
            TrainingDivergedError: If the loss or a gradient becomes non-finite.
        """
        plan = self.plan
        if not dataset:
            raise DatasetError("Cannot train on an empty dataset")
        expected = LOSS_OF_ARCHITECTURE[model.architecture]
        if plan.loss != expected:
            raise ConfigError(
                f"{model.architecture} models train with the {expected} loss, "
                f"not {plan.loss}"
            )
        segmentation = model.architecture == METHOD_SB
        if segmentation and any(s.mask is None for s in dataset):
            raise DatasetError("Segmentation training needs a mask for every sample")
        if not segmentation and len(dataset) < MIN_REGRESSOR_TRAINING_CASES:
            raise ConfigError(
                f"{model.architecture} needs at least "
                f"{MIN_REGRESSOR_TRAINING_CASES} training samples, got {len(dataset)}"
            )

        divisor = input_divisor(model)
        targets = None if segmentation else self._targets(model, dataset)
        model.metadata["train_case_ids"] = [int(s.case_id) for s in dataset]
        params = model.trainable_parameters()
        logger.info(
            "Training %s on %d samples for %d epochs (lr=%g, wd=%g)",
            model.architecture,
            len(dataset),
            plan.epochs,
            optim.learning_rate,
            optim.weight_decay,
        )

        curve: List[float] = []
        model.train()
        epochs = tqdm(
            range(plan.epochs),
            desc=f"train {model.architecture}",
            disable=not progress_enabled(),
            leave=False,
        )
        try:
            for epoch in epochs:
                total = 0.0
                for step, batch in enumerate(
                    self._batches(len(dataset), epoch, merge_singleton=not segmentation)
                ):
                    samples = [dataset[i] for i in batch]
                    if plan.augment:
                        samples = [
                            augment(s, plan.augmentation, (plan.seed, epoch, int(i)))
                            for s, i in zip(samples, batch)
                        ]
                    x = prepare_batch([s.image for s in samples], divisor)
                    rng = np.random.default_rng(
                        [plan.seed, epoch, step, _DROPOUT_STREAM]
                    )
                    model.zero_grad()
                    out = model.forward(x, rng)
                    if segmentation:
                        loss = dice_loss(
                            out, prepare_masks([s.mask for s in samples], divisor)
                        )
                    else:
                        loss = mse_loss(out, targets[batch])
                    if not np.isfinite(loss.item()):
                        raise TrainingDivergedError(epoch)
                    loss.backward()
                    adam_step(params, optim)
                    total += loss.item() * len(batch)
                curve.append(total / len(dataset))
                epochs.set_postfix(loss=f"{curve[-1]:.4f}")
                logger.debug(
                    "%s epoch %d loss %.6f", model.architecture, epoch, curve[-1]
                )
        except NonFiniteError as e:
            raise TrainingDivergedError(
                epoch, f"Training diverged at epoch {epoch}: {e}"
            ) from e
        finally:
            model.eval()
            model.zero_grad()

        logger.info(
            "Finished %s training, final loss %s",
            model.architecture,
            f"{curve[-1]:.6f}" if curve else "n/a",
        )
        return TrainResult(model, curve, plan, optim.weight_decay)


def train(
    model: ModelBundle, dataset: Sequence[Sample], plan: TrainPlan, optim: OptimState
) -> TrainResult:
    """Train ``model`` with ``plan`` (see :meth:`Trainer.train`)."""
    return Trainer(plan).train(model, dataset, optim)


def write_loss_curve(
    result: TrainResult, path: Union[str, Path], extra: Optional[Dict] = None
) -> Path:
    """Write the loss curve as CSV (epoch, loss) and the run settings as JSON.

    Returns:
        Path: The CSV path; the sidecar has the same stem with a ``.json`` suffix.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(
        {"epoch": range(len(result.loss_curve)), "loss": result.loss_curve}
    ).to_csv(path, index=False)
    sidecar = {
        "architecture": result.model.architecture,
        "plan": result.plan.to_dict() if result.plan else None,
        "weight_decay": result.weight_decay,
        "model_config": result.model.config.to_dict(),
        **(extra or {}),
    }
    sidecar_path = path.with_suffix(".json")
    sidecar_path.write_text(json.dumps(sidecar, indent=2), encoding="utf-8")
    return path
