"""Evaluation measures: PLE, Pearson R, Dice coefficient and Hausdorff distance."""

import logging
import math
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage, stats

from src.utils.exceptions import GeometryError, MetricError, ShapeError
from src.utils.models import BinaryMask, CasePrediction, MetricsReport

logger = logging.getLogger(__name__)

R_MODES = ("pooled", "fold_mean")


def ple(pred_mm: Sequence[float], gt_mm: Sequence[float]) -> float:
    """Percentage length error: mean of |pred - gt| / gt, times 100.

    Raises:
        MetricError: On length mismatch, empty input or a non-positive ground truth.
    """
    pred = np.asarray(pred_mm, dtype=np.float64)
    gt = np.asarray(gt_mm, dtype=np.float64)
    if pred.shape != gt.shape or pred.size == 0:
        raise MetricError(
            f"ple needs equal non-empty inputs, got {pred.shape} and {gt.shape}"
        )
    if (gt <= 0).any():
        raise MetricError("Ground-truth lengths must be positive")
    return float(np.mean(np.abs(pred - gt) / gt) * 100.0)


def pearson_r(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson correlation.

    Raises:
        MetricError: With fewer than two points or zero variance in either input.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.size < 2:  # noqa: PLR2004
        raise MetricError(
            f"pearson_r needs two equal inputs of size >= 2, got {x.shape}, {y.shape}"
        )
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise MetricError("Pearson correlation is undefined for zero variance")
    return float(stats.pearsonr(x, y)[0])


def _check_pair(a: BinaryMask, b: BinaryMask):
    if a.shape != b.shape:
        raise ShapeError(f"Mask shapes differ: {a.shape} vs {b.shape}")


def dice_coefficient(a: BinaryMask, b: BinaryMask) -> float:
    """Return 2|A & B| / (|A| + |B|); two empty masks score 1."""
    _check_pair(a, b)
    total = a.count + b.count
    if total == 0:
        return 1.0
    return float(2.0 * np.logical_and(a.bits, b.bits).sum() / total)


def _directed_hausdorff(a: BinaryMask, b: BinaryMask) -> float:
    # distance from every pixel to the nearest pixel of b, in millimetres
    distance = ndimage.distance_transform_edt(~b.bits, sampling=b.spacing)
    return float(distance[a.bits].max())


def hausdorff_distance(a: BinaryMask, b: BinaryMask) -> float:
    """Symmetric Hausdorff distance between pixel-centre sets, in millimetres.

    Raises:
        GeometryError: If either mask is empty.
        ShapeError: If shapes or spacings differ.
    """
    _check_pair(a, b)
    if a.spacing != b.spacing:
        raise ShapeError(f"Mask spacings differ: {a.spacing} vs {b.spacing}")
    if a.is_empty or b.is_empty:
        raise GeometryError("Hausdorff distance is undefined for an empty mask")
    return max(_directed_hausdorff(a, b), _directed_hausdorff(b, a))


def summarize(
    method: str,
    predictions: Sequence[CasePrediction],
    r_mode: str = "pooled",
) -> MetricsReport:
    """Compute the report of one method over its held-out predictions.

    Args:
        method (str): Method tag.
        predictions (Sequence[CasePrediction]): One prediction per case.
        r_mode (str): ``"pooled"`` correlates all predictions at once; ``"fold_mean"``
            averages the per-fold correlations.

    Returns:
        MetricsReport: PLE and R for every method, mean Dice and Hausdorff distance
            when masks were predicted. Cases without a Hausdorff distance are
            excluded from its mean and counted.
    """
    if r_mode not in R_MODES:
        raise MetricError(f"Unknown r_mode {r_mode!r}")
    pred = [p.pred_mm for p in predictions]
    gt = [p.gt_mm for p in predictions]
    if r_mode == "pooled":
        r = pearson_r(pred, gt)
    else:
        folds = sorted({p.fold for p in predictions})
        r = float(
            np.mean(
                [
                    pearson_r(
                        [p.pred_mm for p in predictions if p.fold == k],
                        [p.gt_mm for p in predictions if p.fold == k],
                    )
                    for k in folds
                ]
            )
        )

    dice: Optional[float] = None
    hd: Optional[float] = None
    excluded = 0
    if any(p.dice is not None for p in predictions):
        dice = float(np.mean([p.dice for p in predictions if p.dice is not None]))
        distances = [p.hausdorff_mm for p in predictions if p.dice is not None]
        finite = [d for d in distances if d is not None and not math.isnan(d)]
        excluded = len(distances) - len(finite)
        hd = float(np.mean(finite)) if finite else float("nan")
        if excluded:
            logger.warning(
                "%s: %d cases without Hausdorff distance (empty prediction)",
                method,
                excluded,
            )
    return MetricsReport(
        method=method,
        ple_percent=ple(pred, gt),
        pearson_r=r,
        n_cases=len(predictions),
        dice=dice,
        hausdorff_mm=hd,
        n_hd_excluded=excluded,
    )
