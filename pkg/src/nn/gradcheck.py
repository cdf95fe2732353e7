"""Finite-difference verification of analytic gradients.

:func:`grad_check` compares the gradients produced by :func:`~src.nn.tensor.backward`
with central differences of a random linear projection of the operation output.
:func:`run_suite` applies it to every differentiable operation over several random
instances and returns a pass/fail table.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.nn import functional as F
from src.nn.tensor import Tensor, backward, no_grad
from src.utils.config import (
    GRADCHECK_POINTWISE_TOLERANCE,
    GRADCHECK_STEP,
    GRADCHECK_TOLERANCE,
)

logger = logging.getLogger(__name__)


@dataclass
class GradCheckReport:
    """Result of one gradient check.

    Attributes:
        name (str): Operation label.
        errors (Dict[str, float]): Relative error per input tensor.
        tolerance (float): Pass threshold.
    """

    name: str
    errors: Dict[str, float] = field(default_factory=dict)
    tolerance: float = GRADCHECK_TOLERANCE

    @property
    def max_rel_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Return max|a - n| / max(max|a|, max|n|, 1e-12)."""
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
    return float(np.abs(analytic - numeric).max() / scale)


def numerical_gradient(
    value: Callable[[], float], array: np.ndarray, step: float = GRADCHECK_STEP
) -> np.ndarray:
    """Central differences of ``value`` with respect to ``array`` (edited in place)."""
    flat = array.reshape(-1)
    grad = np.zeros(flat.size)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        plus = value()
        flat[i] = original - step
        minus = value()
        flat[i] = original
        grad[i] = (plus - minus) / (2.0 * step)
    return grad.reshape(array.shape)


def grad_check(  # noqa: PLR0913
    op: Callable[..., Tensor],
    shapes: Optional[Sequence[Sequence[int]]] = None,
    tolerance: float = GRADCHECK_TOLERANCE,
    inputs: Optional[Sequence[np.ndarray]] = None,
    seed: int = 0,
    step: float = GRADCHECK_STEP,
    name: Optional[str] = None,
) -> GradCheckReport:
    """Compare analytic and central-difference gradients of ``op``.

    Args:
        op (Callable[..., Tensor]): Operation under test, called with one tensor per
            input.
        shapes (Optional[Sequence[Sequence[int]]]): Shapes of standard normal inputs,
            used when ``inputs`` is not given.
        tolerance (float): Pass threshold on the relative error.
        inputs (Optional[Sequence[np.ndarray]]): Explicit input values.
        seed (int): Seed of the random inputs and output projection.
        step (float): Finite-difference step.
        name (Optional[str]): Label of the report.

    Returns:
        GradCheckReport: Relative error per input.
    """
    rng = np.random.default_rng(seed)
    if inputs is None:
        inputs = [rng.standard_normal(tuple(shape)) for shape in shapes]
    tensors = [
        Tensor(np.array(a, dtype=np.float64), requires_grad=True, name=f"input{i}")
        for i, a in enumerate(inputs)
    ]
    out = op(*tensors)
    projection = rng.standard_normal(out.shape)
    backward(F.sum(F.mul(out, Tensor(projection))))

    def value() -> float:
        with no_grad():
            return float(np.sum(op(*tensors).data * projection))

    name = name or getattr(op, "__name__", "op")
    report = GradCheckReport(name=name, tolerance=tolerance)
    for tensor in tensors:
        analytic = tensor.grad if tensor.grad is not None else np.zeros(tensor.shape)
        numeric = numerical_gradient(value, tensor.data, step)
        report.errors[tensor.name] = relative_error(analytic, numeric)
    return report


@dataclass
class GradCheckCase:
    """One entry of the gradient suite.

    Attributes:
        name (str): Operation label.
        op (Callable[..., Tensor]): Operation under test.
        make_inputs (Callable[[np.random.Generator], List[np.ndarray]]): Draws one
            random instance.
        tolerance (float): Pass threshold.
    """

    name: str
    op: Callable[..., Tensor]
    make_inputs: Callable[[np.random.Generator], List[np.ndarray]]
    tolerance: float = GRADCHECK_TOLERANCE


def _dims(rng: np.random.Generator, low: int, high: int, count: int) -> List[int]:
    return [int(v) for v in rng.integers(low, high + 1, size=count)]


def _linear_inputs(rng):
    n, d, m = _dims(rng, 2, 5, 3)
    return [
        rng.standard_normal((n, d)),
        rng.standard_normal((m, d)),
        rng.standard_normal(m),
    ]


def _conv_inputs(rng):
    c, k, h, w = _dims(rng, 1, 3, 2) + _dims(rng, 3, 6, 2)
    return [
        rng.standard_normal((2, c, h, w)),
        rng.standard_normal((k, c, 3, 3)),
        rng.standard_normal(k),
    ]


def _strided_conv_inputs(rng):
    c, k = _dims(rng, 1, 3, 2)
    h, w = (2 * v + 1 for v in _dims(rng, 1, 3, 2))
    return [
        rng.standard_normal((2, c, h, w)),
        rng.standard_normal((k, c, 3, 3)),
        rng.standard_normal(k),
    ]


def _transposed_inputs(rng):
    c, k, h, w = _dims(rng, 1, 3, 4)
    return [
        rng.standard_normal((2, c, h, w)),
        rng.standard_normal((c, k, 2, 2)),
        rng.standard_normal(k),
    ]


def _pool_inputs(rng):
    c = _dims(rng, 1, 3, 1)[0]
    h, w = (2 * v for v in _dims(rng, 1, 3, 2))
    shape = (2, c, h, w)
    # well separated values keep every window maximum unique under the step
    values = rng.permutation(int(np.prod(shape))) * 0.01
    return [values.reshape(shape)]


def _bn_inputs(rng):
    c = _dims(rng, 1, 3, 1)[0]
    return [
        rng.standard_normal((3, c, 2, 3)),
        rng.standard_normal(c),
        rng.standard_normal(c),
    ]


def _bn_train(x, gamma, beta):
    c = x.shape[1]
    return F.batch_norm(x, gamma, beta, np.zeros(c), np.ones(c), training=True)


def _bn_eval(x, gamma, beta):
    c = x.shape[1]
    return F.batch_norm(
        x, gamma, beta, np.full(c, 0.3), np.linspace(0.5, 2.0, c), training=False
    )


def _away_from_zero(rng):
    shape = tuple(_dims(rng, 2, 5, 2))
    magnitude = 0.1 + np.abs(rng.standard_normal(shape))
    return [np.sign(rng.standard_normal(shape)) * magnitude]


def _vector_inputs(rng):
    return [rng.standard_normal(tuple(_dims(rng, 2, 5, 2)))]


def _pair_inputs(rng):
    shape = tuple(_dims(rng, 2, 5, 2))
    return [rng.standard_normal(shape), rng.standard_normal(shape)]


def _concat_inputs(rng):
    n, h, w = _dims(rng, 1, 3, 3)
    c1, c2 = _dims(rng, 1, 3, 2)
    return [rng.standard_normal((n, c1, h, w)), rng.standard_normal((n, c2, h, w))]


def _dropout(x):
    return F.dropout(x, 0.5, training=True, rng=np.random.default_rng(11))


def _flatten_inputs(rng):
    return [rng.standard_normal((2,) + tuple(_dims(rng, 1, 4, 3)))]


NN_GRADCHECK_CASES: List[GradCheckCase] = [
    GradCheckCase("conv2d", F.conv2d, _conv_inputs),
    GradCheckCase(
        "conv2d_same",
        lambda x, w, b: F.conv2d(x, w, b, stride=1, padding=1),
        _conv_inputs,
    ),
    GradCheckCase(
        "conv2d_stride2",
        lambda x, w, b: F.conv2d(x, w, b, stride=2, padding=1),
        _strided_conv_inputs,
    ),
    GradCheckCase("transposed_conv2d", F.transposed_conv2d, _transposed_inputs),
    GradCheckCase(
        "max_pool2", F.max_pool2, _pool_inputs, GRADCHECK_POINTWISE_TOLERANCE
    ),
    GradCheckCase("batch_norm_train", _bn_train, _bn_inputs),
    GradCheckCase("batch_norm_eval", _bn_eval, _bn_inputs),
    GradCheckCase("relu", F.relu, _away_from_zero, GRADCHECK_POINTWISE_TOLERANCE),
    GradCheckCase("sigmoid", F.sigmoid, _vector_inputs, GRADCHECK_POINTWISE_TOLERANCE),
    GradCheckCase("dropout", _dropout, _vector_inputs, GRADCHECK_POINTWISE_TOLERANCE),
    GradCheckCase("linear", F.linear, _linear_inputs, GRADCHECK_POINTWISE_TOLERANCE),
    GradCheckCase("flatten", F.flatten, _flatten_inputs, GRADCHECK_POINTWISE_TOLERANCE),
    GradCheckCase(
        "concat",
        lambda a, b: F.concat([a, b], axis=1),
        _concat_inputs,
        GRADCHECK_POINTWISE_TOLERANCE,
    ),
    GradCheckCase("add", F.add, _pair_inputs, GRADCHECK_POINTWISE_TOLERANCE),
    GradCheckCase("mul", F.mul, _pair_inputs, GRADCHECK_POINTWISE_TOLERANCE),
    GradCheckCase("sum", F.sum, _vector_inputs, GRADCHECK_POINTWISE_TOLERANCE),
]


def run_suite(
    cases: Optional[Sequence[GradCheckCase]] = None, instances: int = 10, seed: int = 0
) -> pd.DataFrame:
    """Check every case over ``instances`` random draws.

    Args:
        cases (Optional[Sequence[GradCheckCase]]): Cases to run; defaults to the
            network operations.
        instances (int): Random instances per case.
        seed (int): Master seed.

    Returns:
        pd.DataFrame: One row per case with columns ``op``, ``instances``,
            ``max_rel_error``, ``tolerance`` and ``status`` (PASS or FAIL).
    """
    rows = []
    for index, case in enumerate(cases if cases is not None else NN_GRADCHECK_CASES):
        worst = 0.0
        for instance in range(instances):
            rng = np.random.default_rng([seed, index, instance])
            report = grad_check(
                case.op,
                inputs=case.make_inputs(rng),
                tolerance=case.tolerance,
                seed=int(rng.integers(2**31)),
                name=case.name,
            )
            worst = max(worst, report.max_rel_error)
        status = "PASS" if worst < case.tolerance else "FAIL"
        logger.debug("%s: max relative error %.3e (%s)", case.name, worst, status)
        rows.append(
            {
                "op": case.name,
                "instances": instances,
                "max_rel_error": worst,
                "tolerance": case.tolerance,
                "status": status,
            }
        )
    return pd.DataFrame(rows)
