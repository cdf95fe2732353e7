# ruff: noqa: PLR2004

import numpy as np
import pytest

from src.nn import functional as F
from src.nn.gradcheck import NN_GRADCHECK_CASES, grad_check, relative_error, run_suite
from src.nn.tensor import Tensor
from src.training.losses import LOSS_GRADCHECK_CASES
from src.utils.exceptions import ConfigError, ShapeError


def test_conv2d_matches_direct_sum():
    """Test conv2d against an explicit cross-correlation."""
    rng = np.random.default_rng(0)
    x = rng.standard_normal((1, 2, 5, 5))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    out = F.conv2d(Tensor(x), Tensor(w), Tensor(b), padding=1).data
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    expected = np.zeros((1, 3, 5, 5))
    for k in range(3):
        for i in range(5):
            for j in range(5):
                window = padded[0, :, i : i + 3, j : j + 3]
                expected[0, k, i, j] = np.sum(window * w[k]) + b[k]
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_conv2d_stride_two_output_size():
    """Test the output size of a strided convolution."""
    x = Tensor(np.zeros((2, 1, 7, 5)))
    out = F.conv2d(
        x, Tensor(np.zeros((4, 1, 3, 3))), Tensor(np.zeros(4)), stride=2, padding=1
    )
    assert out.shape == (2, 4, 4, 3)


def test_conv2d_rejects_inexact_output():
    """Test that a stride that does not tile the input is rejected."""
    x = Tensor(np.zeros((1, 1, 6, 6)))
    with pytest.raises(ShapeError, match="not exact"):
        F.conv2d(
            x, Tensor(np.zeros((1, 1, 3, 3))), Tensor(np.zeros(1)), stride=2, padding=1
        )


def test_conv2d_rejects_channel_mismatch():
    """Test that the weight must match the input channels."""
    with pytest.raises(ShapeError, match="channels"):
        F.conv2d(
            Tensor(np.zeros((1, 2, 4, 4))),
            Tensor(np.zeros((1, 3, 3, 3))),
            Tensor(np.zeros(1)),
        )


def test_transposed_conv_doubles_size():
    """Test that each input pixel spreads over a 2x2 block."""
    x = Tensor(np.arange(4.0).reshape(1, 1, 2, 2))
    w = Tensor(np.ones((1, 1, 2, 2)))
    out = F.transposed_conv2d(x, w).data
    assert out.shape == (1, 1, 4, 4)
    np.testing.assert_allclose(out[0, 0, :2, :2], 0.0)
    np.testing.assert_allclose(out[0, 0, 2:, 2:], 3.0)


def test_max_pool_routes_gradient_to_first_maximum():
    """Test max pooling values and the tie rule of its gradient."""
    x = Tensor(np.array([[[[1.0, 1.0], [0.0, 1.0]]]]), requires_grad=True)
    out = F.max_pool2(x)
    assert out.data.item() == 1.0
    F.sum(out).backward()
    np.testing.assert_allclose(x.grad[0, 0], [[1.0, 0.0], [0.0, 0.0]])


def test_max_pool_rejects_odd_sizes():
    """Test that odd spatial sizes are rejected."""
    with pytest.raises(ShapeError):
        F.max_pool2(Tensor(np.zeros((1, 1, 3, 4))))


def test_batch_norm_training_normalises_and_updates_statistics():
    """Test batch statistics, running statistics and the unbiased variance."""
    x = np.array([[1.0], [3.0]])
    running_mean, running_var = np.zeros(1), np.ones(1)
    gamma, beta = Tensor(np.ones(1)), Tensor(np.zeros(1))
    out = F.batch_norm(Tensor(x), gamma, beta, running_mean, running_var, True)
    np.testing.assert_allclose(out.data[:, 0], [-1.0, 1.0], atol=1e-5)
    np.testing.assert_allclose(running_mean, [0.2])
    np.testing.assert_allclose(running_var, [0.9 + 0.1 * 2.0])


def test_batch_norm_eval_uses_running_statistics():
    """Test that evaluation mode leaves running statistics unchanged."""
    running_mean, running_var = np.array([1.0]), np.array([4.0])
    out = F.batch_norm(
        Tensor(np.array([[3.0]])),
        Tensor(np.ones(1)),
        Tensor(np.zeros(1)),
        running_mean,
        running_var,
        False,
        eps=0.0,
    )
    assert out.data.item() == pytest.approx(1.0)
    assert running_mean[0] == 1.0


def test_batch_norm_training_needs_two_values():
    """Test that a single value per channel cannot be normalised."""
    with pytest.raises(ShapeError):
        F.batch_norm(
            Tensor(np.zeros((1, 2))),
            Tensor(np.ones(2)),
            Tensor(np.zeros(2)),
            np.zeros(2),
            np.ones(2),
            True,
        )


def test_dropout_is_identity_in_eval_and_scales_in_training():
    """Test inverted dropout."""
    x = Tensor(np.ones((100, 10)))
    assert F.dropout(x, 0.5, training=False) is x
    out = F.dropout(x, 0.5, training=True, rng=np.random.default_rng(0)).data
    assert set(np.unique(out)) <= {0.0, 2.0}
    with pytest.raises(ConfigError):
        F.dropout(x, 1.0, training=True, rng=np.random.default_rng(0))
    with pytest.raises(ConfigError, match="seeded"):
        F.dropout(x, 0.5, training=True)


def test_flatten_preserves_row_major_order():
    """Test that flatten keeps the C order of the features."""
    x = np.arange(24.0).reshape(2, 3, 2, 2)
    np.testing.assert_array_equal(F.flatten(Tensor(x)).data, x.reshape(2, 12))


def test_concat_splits_gradient():
    """Test the concat forward pass and its gradient."""
    a = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    b = Tensor(np.ones((1, 2, 2, 2)), requires_grad=True)
    out = F.concat([a, b], axis=1)
    assert out.shape == (1, 3, 2, 2)
    F.sum(out * np.arange(3.0).reshape(1, 3, 1, 1)).backward()
    np.testing.assert_allclose(a.grad, 0.0)
    np.testing.assert_allclose(b.grad[0, 1], 2.0)


def test_linear_shape_checks():
    """Test that linear rejects mismatched shapes."""
    with pytest.raises(ShapeError):
        F.linear(
            Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))), Tensor(np.zeros(4))
        )


def test_relative_error_scale():
    """Test the relative error definition."""
    assert relative_error(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
    assert relative_error(np.array([2.0]), np.array([1.0])) == pytest.approx(0.5)
    assert relative_error(np.zeros(2), np.zeros(2)) == 0.0


def test_grad_check_detects_wrong_gradient():
    """Test that a deliberately wrong backward pass fails the check."""

    class WrongSquare(F.Function):
        def forward(self, x):
            self.x = x
            return x * x

        def backward(self, grad_output):
            return (grad_output * self.x,)

    report = grad_check(lambda x: WrongSquare.apply(x), shapes=[(3, 2)])
    assert not report.passed
    assert report.max_rel_error > 0.1


@pytest.mark.parametrize(
    "case", NN_GRADCHECK_CASES + LOSS_GRADCHECK_CASES, ids=lambda case: case.name
)
def test_gradient_suite_case(case):
    """Test every differentiable operation over several random instances."""
    table = run_suite([case], instances=3, seed=0)
    row = table.iloc[0]
    assert row["status"] == "PASS", f"{case.name}: {row['max_rel_error']:.3e}"


def test_run_suite_table_columns():
    """Test the gradient suite table layout."""
    table = run_suite(NN_GRADCHECK_CASES[:2], instances=1)
    columns = ["op", "instances", "max_rel_error", "tolerance", "status"]
    assert list(table.columns) == columns
    assert table["op"].tolist() == ["conv2d", "conv2d_same"]
