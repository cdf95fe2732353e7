"""Adam optimiser with coupled L2 weight decay."""

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from src.nn.tensor import Tensor
from src.utils.config import ADAM_BETAS, ADAM_EPS, DESK_LEARNING_RATE
from src.utils.exceptions import ConfigError, GraphError, NonFiniteError


@dataclass
class OptimState:
    """Adam hyperparameters and per-parameter moment buffers.

    Attributes:
        learning_rate (float): Step size.
        weight_decay (float): L2 coefficient added to the gradient.
        betas (Tuple[float, float]): Exponential decay rates of the moments.
        eps (float): Denominator offset.
        step (int): Number of updates performed.
        first_moment (Dict[str, np.ndarray]): Running mean of gradients.
        second_moment (Dict[str, np.ndarray]): Running mean of squared gradients.
    """

    learning_rate: float = DESK_LEARNING_RATE
    weight_decay: float = 0.0
    betas: Tuple[float, float] = ADAM_BETAS
    eps: float = ADAM_EPS
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ConfigError("learning_rate and weight_decay must be >= 0")
        if not all(0.0 <= b < 1.0 for b in self.betas):
            raise ConfigError(f"Adam betas must be in [0, 1), got {self.betas}")


def adam_step(params: Dict[str, Tensor], state: OptimState):
    """Apply one Adam update in place.

    The weight decay is coupled: ``g <- g + weight_decay * theta`` before the moment
    updates. Moments are bias-corrected.

    Args:
        params (Dict[str, Tensor]): Parameters to update, by name.
        state (OptimState): Optimiser state, updated in place.

    Raises:
        GraphError: If a parameter has no gradient.
        NonFiniteError: If a gradient contains NaN or Inf.
    """
    for name, tensor in params.items():
        if tensor.grad is None:
            raise GraphError(f"Parameter {name} has no gradient")
        if not np.all(np.isfinite(tensor.grad)):
            raise NonFiniteError(f"Non-finite gradient for parameter {name}")

    beta1, beta2 = state.betas
    state.step += 1
    correction1 = 1.0 - beta1**state.step
    correction2 = 1.0 - beta2**state.step
    for name, tensor in params.items():
        grad = tensor.grad
        if state.weight_decay:
            grad = grad + state.weight_decay * tensor.data
        m = state.first_moment.setdefault(name, np.zeros_like(tensor.data))
        v = state.second_moment.setdefault(name, np.zeros_like(tensor.data))
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        if state.learning_rate:
            update = (m / correction1) / (np.sqrt(v / correction2) + state.eps)
            tensor.data -= state.learning_rate * update
