"""Loss functions: Dice loss for segmentation, mean squared error for regression."""

import numpy as np

from src.nn.gradcheck import GradCheckCase
from src.nn.tensor import Function, Tensor
from src.utils.config import DICE_SMOOTH, GRADCHECK_POINTWISE_TOLERANCE
from src.utils.exceptions import ShapeError


class DiceLoss(Function):
    def forward(self, pred, target, smooth):
        self.pred, self.target, self.smooth = pred, target, smooth
        self.intersection = float(np.sum(pred * target))
        self.total = float(pred.sum() + target.sum())
        overlap = (2.0 * self.intersection + smooth) / (self.total + smooth)
        return np.asarray(1.0 - overlap)

    def backward(self, grad_output):
        denominator = self.total + self.smooth
        numerator = 2.0 * self.intersection + self.smooth
        grad = -(2.0 * self.target * denominator - numerator) / denominator**2
        return (float(grad_output) * grad,)


def dice_loss(pred: Tensor, target: np.ndarray, smooth: float = DICE_SMOOTH) -> Tensor:
    """Soft Dice loss summed over the whole batch.

    ``1 - (2 * sum(pred * target) + smooth) / (sum(pred) + sum(target) + smooth)``

    Args:
        pred (Tensor): Probabilities in (0, 1).
        target (np.ndarray): Binary mask(s) of the same shape.
        smooth (float): Additive smoothing constant.

    Raises:
        ShapeError: If the shapes differ.
    """
    target = np.asarray(target, dtype=np.float64)
    if target.shape != pred.shape:
        raise ShapeError(f"dice_loss: prediction {pred.shape} vs target {target.shape}")
    return DiceLoss.apply(pred, target=target, smooth=smooth)


class MSELoss(Function):
    def forward(self, pred, target):
        self.diff = pred - target
        return np.asarray(np.mean(self.diff**2))

    def backward(self, grad_output):
        return (float(grad_output) * 2.0 * self.diff / self.diff.size,)


def mse_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean of squared differences; a (N,) target is accepted for (N, 1) predictions."""
    target = np.asarray(target, dtype=np.float64)
    if target.size != pred.size or (target.shape != pred.shape and target.ndim != 1):
        raise ShapeError(f"mse_loss: prediction {pred.shape} vs target {target.shape}")
    return MSELoss.apply(pred, target=target.reshape(pred.shape))


def _dice_inputs(rng):
    return [rng.uniform(0.05, 0.95, size=(2, 1, 4, 5))]


def _mse_inputs(rng):
    return [rng.standard_normal((int(rng.integers(2, 6)), 1))]


_DICE_TARGET = (np.arange(40).reshape(2, 1, 4, 5) % 3 == 0).astype(float)
_MSE_TARGET_SEED = 3


def _mse_target(n: int) -> np.ndarray:
    return np.random.default_rng(_MSE_TARGET_SEED).standard_normal(n)


LOSS_GRADCHECK_CASES = [
    GradCheckCase(
        "dice_loss", lambda p: dice_loss(p, _DICE_TARGET), _dice_inputs, 1e-5
    ),
    GradCheckCase(
        "mse_loss",
        lambda p: mse_loss(p, _mse_target(p.shape[0])),
        _mse_inputs,
        GRADCHECK_POINTWISE_TOLERANCE,
    ),
]
