"""Reverse-mode differentiable tensor.

A :class:`Tensor` wraps a float64 NumPy array. Every differentiable operation is a
:class:`Function` subclass; calling ``Function.apply`` records the operation on its
output so that :func:`backward` can walk the recorded graph in reverse topological
order and accumulate gradients into every tensor that requires them.
"""

import contextlib
import logging
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.utils.exceptions import GraphError, NonFiniteError, ShapeError

logger = logging.getLogger(__name__)

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the context (inference)."""
    global _GRAD_ENABLED  # noqa: PLW0603
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def grad_enabled() -> bool:
    """Return True when operations are being recorded."""
    return _GRAD_ENABLED


class Tensor:
    """N-dimensional float64 array with an optional gradient slot.

    Attributes:
        data (np.ndarray): C-contiguous float64 values.
        grad (Optional[np.ndarray]): Accumulated gradient, same shape as ``data``.
        requires_grad (bool): Whether gradients must be computed for this tensor.
        name (Optional[str]): Optional label used in diagnostics.
    """

    def __init__(
        self, data, requires_grad: bool = False, name: Optional[str] = None
    ):
        self.data = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.creator: Optional["Function"] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self.creator is None

    def numpy(self) -> np.ndarray:
        """Return a copy of the values."""
        return self.data.copy()

    def item(self) -> float:
        """Return the value of a single-element tensor."""
        if self.size != 1:
            raise ShapeError(f"item() needs a single element, tensor has {self.size}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """Return a tensor sharing no graph with this one."""
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Back-propagate from this scalar tensor."""
        backward(self)

    def __add__(self, other):
        from src.nn import functional as F  # noqa: PLC0415

        return F.add(self, _as_tensor(other))

    __radd__ = __add__

    def __mul__(self, other):
        from src.nn import functional as F  # noqa: PLC0415

        return F.mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return (
            f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"
        )


def _as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


class Function:
    """Base class of differentiable operations.

    Subclasses implement ``forward`` on NumPy arrays and ``backward`` returning one
    gradient (or ``None``) per tensor input. Intermediates needed by ``backward`` are
    stored on ``self``.
    """

    def __init__(self):
        self.inputs: Tuple[Tensor, ...] = ()

    @classmethod
    def apply(cls, *inputs: Tensor, **kwargs) -> Tensor:
        """Run the forward pass and record the node when gradients are needed."""
        fn = cls()
        fn.inputs = tuple(inputs)
        out_data = fn.forward(*(t.data for t in inputs), **kwargs)
        if not np.all(np.isfinite(out_data)):
            raise NonFiniteError(f"{cls.__name__} produced non-finite values")
        requires_grad = grad_enabled() and any(t.requires_grad for t in inputs)
        out = Tensor(out_data, requires_grad=requires_grad)
        if requires_grad:
            out.creator = fn
        return out

    def forward(self, *arrays: np.ndarray, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_output: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError


class Graph:
    """Operations reachable from a tensor, in topological order.

    Attributes:
        nodes (List[Tensor]): Tensors such that every creator's inputs precede the
            tensor it produced.
    """

    def __init__(self, nodes: List[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_output(cls, output: Tensor) -> "Graph":
        """Collect the graph feeding ``output`` by iterative depth-first search.

        Raises:
            GraphError: If a cycle is found.
        """
        order: List[Tensor] = []
        state: Dict[int, int] = {}  # 1 = visiting, 2 = done
        stack: List[Tuple[Tensor, bool]] = [(output, False)]
        while stack:
            tensor, expanded = stack.pop()
            key = id(tensor)
            if expanded:
                state[key] = 2
                order.append(tensor)
                continue
            if state.get(key) == 2:  # noqa: PLR2004
                continue
            if state.get(key) == 1:
                raise GraphError("Cycle detected in the computation graph")
            state[key] = 1
            stack.append((tensor, True))
            if tensor.creator is not None:
                for parent in reversed(tensor.creator.inputs):
                    if not parent.requires_grad:
                        continue
                    parent_state = state.get(id(parent))
                    if parent_state == 1:
                        raise GraphError("Cycle detected in the computation graph")
                    if parent_state is None:
                        stack.append((parent, False))
        return cls(order)

    def __len__(self) -> int:
        return len(self.nodes)


def backward(loss: Tensor):
    """Fill ``grad`` of every tensor that requires it and feeds ``loss``.

    Leaf gradients accumulate across calls; intermediate tensors receive the gradient
    of the current pass.

    Args:
        loss (Tensor): Single-element tensor produced by recorded operations.

    Raises:
        GraphError: If ``loss`` is not scalar or no graph was recorded.
        NonFiniteError: If a gradient contains NaN or Inf.
    """
    if loss.size != 1:
        raise GraphError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GraphError("backward() called on a tensor without a recorded graph")

    graph = Graph.from_output(loss)
    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for tensor in reversed(graph.nodes):
        grad = grads.pop(id(tensor), None)
        if grad is None:
            continue
        if tensor.is_leaf:
            tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad
            continue
        tensor.grad = grad
        input_grads = tensor.creator.backward(grad)
        for parent, parent_grad in zip(tensor.creator.inputs, input_grads):
            if parent_grad is None or not parent.requires_grad:
                continue
            if parent_grad.shape != parent.shape:
                raise ShapeError(
                    f"{type(tensor.creator).__name__} returned a gradient of shape "
                    f"{parent_grad.shape} for an input of shape {parent.shape}"
                )
            if not np.all(np.isfinite(parent_grad)):
                raise NonFiniteError(
                    f"Non-finite gradient in {type(tensor.creator).__name__}"
                )
            key = id(parent)
            grads[key] = parent_grad if key not in grads else grads[key] + parent_grad
    logger.debug("Back-propagated through %d nodes", len(graph))


def zero_grads(tensors: Sequence[Tensor]):
    """Reset the gradient of every tensor."""
    for tensor in tensors:
        tensor.zero_grad()
