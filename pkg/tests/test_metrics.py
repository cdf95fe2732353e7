# ruff: noqa: PLR2004

import math

import numpy as np
import pytest

from src.data.metrics import (
    dice_coefficient,
    hausdorff_distance,
    pearson_r,
    ple,
    summarize,
)
from src.utils.exceptions import GeometryError, MetricError, ShapeError
from src.utils.models import BinaryMask, CasePrediction


def _block(shape, top, left, height, width, spacing=(1.0, 1.0)):
    bits = np.zeros(shape, dtype=bool)
    bits[top : top + height, left : left + width] = True
    return BinaryMask(bits, spacing)


def test_ple_example():
    """Test PLE on a two-case example."""
    assert ple([90.0, 110.0], [100.0, 100.0]) == pytest.approx(10.0)
    assert ple([100.0], [100.0]) == 0.0


@pytest.mark.parametrize(
    ("pred", "gt"),
    [([], []), ([1.0, 2.0], [1.0]), ([1.0], [0.0])],
)
def test_ple_errors(pred, gt):
    """Test PLE input validation."""
    with pytest.raises(MetricError):
        ple(pred, gt)


def test_pearson_r():
    """Test Pearson R on perfectly related and anti-related data."""
    assert pearson_r([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert pearson_r([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)


def test_pearson_r_errors():
    """Test that constant or too short inputs are refused."""
    with pytest.raises(MetricError, match="zero variance"):
        pearson_r([1, 1, 1], [1, 2, 3])
    with pytest.raises(MetricError):
        pearson_r([1.0], [2.0])


def test_dice_coefficient():
    """Test Dice on overlapping, identical and empty masks."""
    a = _block((6, 6), 0, 0, 2, 2)
    b = _block((6, 6), 0, 1, 2, 2)
    assert dice_coefficient(a, b) == pytest.approx(0.5)
    assert dice_coefficient(a, a) == 1.0
    empty = BinaryMask(np.zeros((6, 6), dtype=bool))
    assert dice_coefficient(empty, empty) == 1.0
    assert dice_coefficient(a, empty) == 0.0
    with pytest.raises(ShapeError):
        dice_coefficient(a, BinaryMask(np.zeros((5, 6), dtype=bool)))


def test_hausdorff_shifted_block():
    """Test the Hausdorff distance of a shifted block."""
    a = _block((10, 10), 2, 2, 3, 3)
    assert hausdorff_distance(a, a) == 0.0
    assert hausdorff_distance(a, _block((10, 10), 2, 5, 3, 3)) == pytest.approx(3.0)
    b = _block((10, 10), 5, 5, 3, 3)
    assert hausdorff_distance(a, b) == pytest.approx(3.0 * math.sqrt(2))


def test_hausdorff_uses_spacing():
    """Test that distances are reported in millimetres."""
    a = _block((10, 10), 2, 2, 3, 3, spacing=(2.0, 0.5))
    b = _block((10, 10), 4, 2, 3, 3, spacing=(2.0, 0.5))
    assert hausdorff_distance(a, b) == pytest.approx(4.0)


def test_hausdorff_is_symmetric_for_nested_masks():
    """Test that the larger directed distance is returned."""
    small = _block((10, 10), 4, 4, 1, 1)
    large = _block((10, 10), 2, 2, 5, 5)
    assert hausdorff_distance(small, large) == hausdorff_distance(large, small)
    assert hausdorff_distance(small, large) == pytest.approx(2.0 * math.sqrt(2))


def test_hausdorff_errors():
    """Test empty masks and spacing mismatches."""
    a = _block((6, 6), 1, 1, 2, 2)
    with pytest.raises(GeometryError):
        hausdorff_distance(a, BinaryMask(np.zeros((6, 6), dtype=bool)))
    with pytest.raises(ShapeError, match="spacing"):
        hausdorff_distance(a, _block((6, 6), 1, 1, 2, 2, spacing=(2.0, 2.0)))


@pytest.fixture
def predictions():
    """Create six predictions over two folds."""
    rows = [
        (0, 0, 100.0, 100.0),
        (1, 0, 110.0, 120.0),
        (2, 0, 130.0, 125.0),
        (3, 1, 90.0, 95.0),
        (4, 1, 140.0, 150.0),
        (5, 1, 115.0, 105.0),
    ]
    return [CasePrediction(case, "DE", fold, pred, gt) for case, fold, pred, gt in rows]


def test_summarize_regression(predictions):
    """Test the report of a regression method."""
    report = summarize("DE", predictions)
    assert report.n_cases == 6
    assert report.dice is None
    assert report.hausdorff_mm is None
    expected = ple([p.pred_mm for p in predictions], [p.gt_mm for p in predictions])
    assert report.ple_percent == pytest.approx(expected)
    assert report.to_row()["Dice"] is None


def test_summarize_r_modes(predictions):
    """Test pooled and fold-mean correlation."""
    pooled = summarize("DE", predictions, r_mode="pooled").pearson_r
    per_fold = summarize("DE", predictions, r_mode="fold_mean").pearson_r
    fold0 = pearson_r([100.0, 110.0, 130.0], [100.0, 120.0, 125.0])
    fold1 = pearson_r([90.0, 140.0, 115.0], [95.0, 150.0, 105.0])
    assert per_fold == pytest.approx((fold0 + fold1) / 2)
    assert pooled == pytest.approx(
        pearson_r([p.pred_mm for p in predictions], [p.gt_mm for p in predictions])
    )
    with pytest.raises(MetricError):
        summarize("DE", predictions, r_mode="median")


def test_summarize_excludes_missing_hausdorff(predictions):
    """Test that cases without a Hausdorff distance are excluded and counted."""
    for i, p in enumerate(predictions):
        p.dice = 0.8
        p.hausdorff_mm = None if i == 0 else float(i)
    report = summarize("SB", predictions)
    assert report.dice == pytest.approx(0.8)
    assert report.hausdorff_mm == pytest.approx(3.0)
    assert report.n_hd_excluded == 1


def test_hausdorff_matches_all_pairs_brute_force():
    """Test the Hausdorff distance against all pixel pairs on random masks."""
    rng = np.random.default_rng(5)
    for i in range(100):
        shape = tuple(rng.integers(2, 31, size=2))
        spacing = (1.0, 1.0) if i % 2 else tuple(rng.uniform(0.5, 2.0, size=2))
        masks = []
        for _ in range(2):
            bits = rng.random(shape) < rng.uniform(0.05, 0.5)
            bits[tuple(rng.integers(0, shape))] = True
            masks.append(BinaryMask(bits, spacing))
        a, b = (np.argwhere(m.bits) * np.asarray(spacing) for m in masks)
        pairs = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1))
        expected = max(pairs.min(axis=1).max(), pairs.min(axis=0).max())
        assert hausdorff_distance(*masks) == pytest.approx(expected, rel=1e-12)
