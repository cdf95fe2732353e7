"""Differentiable operations used by the segmentation and regression networks.

Every operation is a :class:`~src.nn.tensor.Function` with an explicit backward pass
and a thin wrapper function that validates shapes before recording it.
"""

from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import as_strided
from scipy.special import expit

from src.nn.tensor import Function, Tensor
from src.utils.config import BN_EPS, BN_MOMENTUM
from src.utils.exceptions import ConfigError, ShapeError


def _windows(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Return a read-only (N, C, H', W', kh, kw) view of sliding windows."""
    n, c, h, w = x.shape
    out_h = (h - kh) // stride + 1
    out_w = (w - kw) // stride + 1
    s_n, s_c, s_h, s_w = x.strides
    return as_strided(
        x,
        shape=(n, c, out_h, out_w, kh, kw),
        strides=(s_n, s_c, s_h * stride, s_w * stride, s_h, s_w),
        writeable=False,
    )


class Conv2d(Function):
    def forward(self, x, weight, bias, stride=1, padding=0):
        self.stride, self.padding = stride, padding
        self.x_shape = x.shape
        if padding:
            x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
        self.x_padded = x
        self.weight = weight
        cols = _windows(x, weight.shape[2], weight.shape[3], stride)
        out = np.tensordot(cols, weight, axes=([1, 4, 5], [1, 2, 3]))
        out = out.transpose(0, 3, 1, 2) + bias[None, :, None, None]
        return np.ascontiguousarray(out)

    def backward(self, grad_output):
        kh, kw = self.weight.shape[2:]
        stride, padding = self.stride, self.padding
        cols = _windows(self.x_padded, kh, kw, stride)
        grad_bias = grad_output.sum(axis=(0, 2, 3))
        grad_weight = np.tensordot(grad_output, cols, axes=([0, 2, 3], [0, 2, 3]))
        # (N, H', W', C, kh, kw)
        grad_cols = np.tensordot(grad_output, self.weight, axes=([1], [0]))
        grad_x = np.zeros_like(self.x_padded)
        out_h, out_w = grad_output.shape[2:]
        for i in range(kh):
            for j in range(kw):
                rows = slice(i, i + stride * out_h, stride)
                columns = slice(j, j + stride * out_w, stride)
                patch = grad_cols[..., i, j].transpose(0, 3, 1, 2)
                grad_x[:, :, rows, columns] += patch
        if padding:
            grad_x = grad_x[:, :, padding:-padding, padding:-padding]
        return np.ascontiguousarray(grad_x), grad_weight, grad_bias


def conv2d(
    x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0
) -> Tensor:
    """2-D cross-correlation.

    Args:
        x (Tensor): Input of shape (N, C, H, W).
        weight (Tensor): Kernels of shape (K, C, kh, kw).
        bias (Tensor): Bias of shape (K,).
        stride (int): Step between windows, >= 1.
        padding (int): Zero padding added on each side.

    Returns:
        Tensor: Output of shape (N, K, H', W').

    Raises:
        ShapeError: On mismatched shapes or when the output size is not exact.
    """
    if x.ndim != 4 or weight.ndim != 4:  # noqa: PLR2004
        raise ShapeError(
            f"conv2d expects 4-D input and weight, got {x.shape}, {weight.shape}"
        )
    if stride < 1 or padding < 0:
        raise ShapeError(f"Invalid stride {stride} or padding {padding}")
    if weight.shape[1] != x.shape[1]:
        raise ShapeError(
            f"Input has {x.shape[1]} channels, weight expects {weight.shape[1]}"
        )
    if bias.shape != (weight.shape[0],):
        raise ShapeError(
            f"Bias shape {bias.shape} does not match {weight.shape[0]} kernels"
        )
    kh, kw = weight.shape[2:]
    for size, k in ((x.shape[2], kh), (x.shape[3], kw)):
        span = size + 2 * padding - k
        if span < 0 or span % stride:
            raise ShapeError(
                f"conv2d output size is not exact for input {x.shape[2:]}, "
                f"kernel {(kh, kw)}, stride {stride}, padding {padding}"
            )
    return Conv2d.apply(x, weight, bias, stride=stride, padding=padding)


class TransposedConv2x2(Function):
    def forward(self, x, weight, bias):
        self.x, self.weight = x, weight
        n, _, h, w = x.shape
        k = weight.shape[1]
        out = np.tensordot(x, weight, axes=([1], [0]))  # (N, H, W, K, 2, 2)
        out = out.transpose(0, 3, 1, 4, 2, 5).reshape(n, k, 2 * h, 2 * w)
        return out + bias[None, :, None, None]

    def backward(self, grad_output):
        n, k, h2, w2 = grad_output.shape
        blocks = grad_output.reshape(n, k, h2 // 2, 2, w2 // 2, 2)
        grad_x = np.tensordot(blocks, self.weight, axes=([1, 3, 5], [1, 2, 3]))
        grad_x = np.ascontiguousarray(grad_x.transpose(0, 3, 1, 2))
        grad_weight = np.tensordot(self.x, blocks, axes=([0, 2, 3], [0, 2, 4]))
        grad_bias = grad_output.sum(axis=(0, 2, 3))
        return grad_x, grad_weight, grad_bias


def transposed_conv2d(
    x: Tensor, weight: Tensor, bias: Optional[Tensor] = None
) -> Tensor:
    """Stride-2 transposed convolution with 2x2 kernels (exact 2x upsampling).

    Args:
        x (Tensor): Input of shape (N, C, H, W).
        weight (Tensor): Kernels of shape (C, K, 2, 2).
        bias (Optional[Tensor]): Bias of shape (K,).

    Returns:
        Tensor: Output of shape (N, K, 2H, 2W).
    """
    if x.ndim != 4 or weight.ndim != 4 or weight.shape[2:] != (2, 2):  # noqa: PLR2004
        raise ShapeError(
            f"transposed_conv2d expects (C, K, 2, 2) kernels, got {weight.shape}"
        )
    if weight.shape[0] != x.shape[1]:
        raise ShapeError(
            f"Input has {x.shape[1]} channels, weight expects {weight.shape[0]}"
        )
    if bias is None:
        bias = Tensor(np.zeros(weight.shape[1]))
    if bias.shape != (weight.shape[1],):
        raise ShapeError(
            f"Bias shape {bias.shape} does not match {weight.shape[1]} kernels"
        )
    return TransposedConv2x2.apply(x, weight, bias)


class MaxPool2(Function):
    def forward(self, x):
        n, c, h, w = x.shape
        windows = (
            x.reshape(n, c, h // 2, 2, w // 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, h // 2, w // 2, 4)
        )
        # argmax returns the first maximum in row-major window order
        self.index = windows.argmax(axis=-1)[..., None]
        self.x_shape = x.shape
        return np.take_along_axis(windows, self.index, axis=-1)[..., 0]

    def backward(self, grad_output):
        n, c, h, w = self.x_shape
        windows = np.zeros((n, c, h // 2, w // 2, 4))
        np.put_along_axis(windows, self.index, grad_output[..., None], axis=-1)
        grad_x = (
            windows.reshape(n, c, h // 2, w // 2, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, h, w)
        )
        return (grad_x,)


def max_pool2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2.

    Raises:
        ShapeError: If the spatial dimensions are odd.
    """
    if x.ndim != 4 or x.shape[2] % 2 or x.shape[3] % 2:  # noqa: PLR2004
        raise ShapeError(f"max_pool2 needs even spatial dimensions, got {x.shape}")
    return MaxPool2.apply(x)


class BatchNorm(Function):
    def forward(  # noqa: PLR0913
        self, x, gamma, beta, running_mean, running_var, training, momentum, eps
    ):
        axes = (0,) + tuple(range(2, x.ndim))
        view = (1, -1) + (1,) * (x.ndim - 2)
        self.axes, self.view, self.training = axes, view, training
        self.gamma = gamma
        if training:
            count = x.size // x.shape[1]
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            running_mean *= 1.0 - momentum
            running_mean += momentum * mean
            running_var *= 1.0 - momentum
            running_var += momentum * var * count / (count - 1)
            self.count = count
        else:
            mean, var = running_mean, running_var
        self.inv_std = 1.0 / np.sqrt(var + eps)
        self.x_hat = (x - mean.reshape(view)) * self.inv_std.reshape(view)
        return gamma.reshape(view) * self.x_hat + beta.reshape(view)

    def backward(self, grad_output):
        axes, view = self.axes, self.view
        grad_gamma = (grad_output * self.x_hat).sum(axis=axes)
        grad_beta = grad_output.sum(axis=axes)
        grad_x_hat = grad_output * self.gamma.reshape(view)
        inv_std = self.inv_std.reshape(view)
        if self.training:
            m = self.count
            grad_x = (inv_std / m) * (
                m * grad_x_hat
                - grad_x_hat.sum(axis=axes).reshape(view)
                - self.x_hat * (grad_x_hat * self.x_hat).sum(axis=axes).reshape(view)
            )
        else:
            grad_x = grad_x_hat * inv_std
        return grad_x, grad_gamma, grad_beta


def batch_norm(  # noqa: PLR0913
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = BN_MOMENTUM,
    eps: float = BN_EPS,
) -> Tensor:
    """Per-channel batch normalisation of (N, C) or (N, C, H, W) inputs.

    In training mode the batch statistics are used and the running statistics are
    updated in place; in evaluation mode the running statistics are used.

    Raises:
        ShapeError: On parameter shape mismatch, or in training mode when a channel
            holds a single element.
    """
    channels = x.shape[1] if x.ndim >= 2 else None  # noqa: PLR2004
    if channels is None or gamma.shape != (channels,) or beta.shape != (channels,):
        raise ShapeError(f"batch_norm parameters do not match input shape {x.shape}")
    if running_mean.shape != (channels,) or running_var.shape != (channels,):
        raise ShapeError("Running statistics do not match the channel count")
    if training and x.size // channels <= 1:
        raise ShapeError(
            "batch_norm in training mode needs more than one value per channel"
        )
    return BatchNorm.apply(
        x,
        gamma,
        beta,
        running_mean=running_mean,
        running_var=running_var,
        training=training,
        momentum=momentum,
        eps=eps,
    )


class ReLU(Function):
    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, 0.0)

    def backward(self, grad_output):
        return (grad_output * self.mask,)


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x); the derivative at 0 is 0."""
    return ReLU.apply(x)


class Sigmoid(Function):
    def forward(self, x):
        self.out = expit(x)
        return self.out

    def backward(self, grad_output):
        return (grad_output * self.out * (1.0 - self.out),)


def sigmoid(x: Tensor) -> Tensor:
    """Elementwise logistic function."""
    return Sigmoid.apply(x)


class Dropout(Function):
    def forward(self, x, scale):
        self.scale = scale
        return x * scale

    def backward(self, grad_output):
        return (grad_output * self.scale,)


def dropout(
    x: Tensor, p: float, training: bool, rng: Optional[np.random.Generator] = None
) -> Tensor:
    """Inverted dropout.

    Survivors are scaled by 1 / (1 - p) during training so evaluation is the identity.

    Raises:
        ConfigError: If ``p`` is outside [0, 1).
    """
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"Dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout in training mode needs a seeded generator")
    keep = rng.random(x.shape) >= p
    return Dropout.apply(x, scale=keep / (1.0 - p))


class Linear(Function):
    def forward(self, x, weight, bias):
        self.x, self.weight = x, weight
        return x @ weight.T + bias

    def backward(self, grad_output):
        grad_weight = grad_output.T @ self.x
        return grad_output @ self.weight, grad_weight, grad_output.sum(axis=0)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map: x (N, D), weight (M, D), bias (M,) -> (N, M)."""
    matrices = x.ndim == weight.ndim == 2  # noqa: PLR2004
    if not matrices or weight.shape[1] != x.shape[1]:
        raise ShapeError(
            f"linear: input {x.shape} incompatible with weight {weight.shape}"
        )
    if bias.shape != (weight.shape[0],):
        raise ShapeError(
            f"linear: bias {bias.shape} incompatible with weight {weight.shape}"
        )
    return Linear.apply(x, weight, bias)


class Reshape(Function):
    def forward(self, x, shape):
        self.x_shape = x.shape
        return x.reshape(shape)

    def backward(self, grad_output):
        return (grad_output.reshape(self.x_shape),)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    """Row-major reshape."""
    try:
        shape = np.empty(x.shape, dtype=np.bool_).reshape(tuple(shape)).shape
    except ValueError as e:
        raise ShapeError(f"Cannot reshape {x.shape} into {tuple(shape)}") from e
    return Reshape.apply(x, shape=shape)


def flatten(x: Tensor) -> Tensor:
    """Flatten every axis but the first, preserving row-major order."""
    return reshape(x, (x.shape[0], -1))


class Concat(Function):
    def forward(self, *arrays, axis):
        self.axis = axis
        self.splits = np.cumsum([a.shape[axis] for a in arrays])[:-1]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad_output):
        return tuple(
            np.ascontiguousarray(g)
            for g in np.split(grad_output, self.splits, axis=self.axis)
        )


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    """Concatenate tensors along ``axis`` (channels by default)."""
    first = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(first) or any(
            a != b for k, (a, b) in enumerate(zip(t.shape, first)) if k != axis
        ):
            raise ShapeError(
                f"concat: shapes {first} and {t.shape} differ off axis {axis}"
            )
    return Concat.apply(*tensors, axis=axis)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Add(Function):
    def forward(self, a, b):
        self.shapes = a.shape, b.shape
        return a + b

    def backward(self, grad_output):
        return (
            _unbroadcast(grad_output, self.shapes[0]),
            _unbroadcast(grad_output, self.shapes[1]),
        )


def _check_broadcast(name: str, a: Tensor, b: Tensor):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise ShapeError(
            f"{name}: shapes {a.shape} and {b.shape} do not broadcast"
        ) from e


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum with NumPy broadcasting."""
    _check_broadcast("add", a, b)
    return Add.apply(a, b)


class Mul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad_output):
        return (
            _unbroadcast(grad_output * self.b, self.a.shape),
            _unbroadcast(grad_output * self.a, self.b.shape),
        )


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product with NumPy broadcasting."""
    _check_broadcast("mul", a, b)
    return Mul.apply(a, b)


class Sum(Function):
    def forward(self, x):
        self.x_shape = x.shape
        return np.asarray(x.sum())

    def backward(self, grad_output):
        return (np.full(self.x_shape, float(grad_output)),)


def sum(x: Tensor) -> Tensor:  # noqa: A001
    """Sum of all elements, as a scalar tensor."""
    return Sum.apply(x)
