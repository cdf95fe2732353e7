"""Float64 reverse-mode autodiff engine."""

from src.nn.tensor import Function, Graph, Tensor, backward, no_grad

__all__ = ["Function", "Graph", "Tensor", "backward", "no_grad"]
