# ruff: noqa: PLR2004

import numpy as np
import pandas as pd
import plotly.graph_objects as go
import pytest

from src.data.geometry import measure_mask
from src.utils.models import MethodResult
from src.visualization.plots import (
    axis_segment,
    create_loss_figure,
    create_overlay_figure,
    create_scatter_figure,
    figures_to_html,
    loss_curve_frame,
)
from tests.conftest import rectangle_sample


@pytest.fixture
def results():
    """Create two methods with loss curves over two folds."""
    return {
        "SB": MethodResult("SB", loss_curves={0: [1.0, 0.5, 0.25], 1: [0.9, 0.3]}),
        "VGG": MethodResult("VGG", loss_curves={0: [2.0]}),
    }


@pytest.fixture
def predictions():
    """Create a small predictions table."""
    return pd.DataFrame(
        {
            "case_id": [0, 1, 0, 1],
            "method": ["SB", "SB", "DE", "DE"],
            "pred_mm": [98.0, 121.0, 105.0, 111.0],
            "gt_mm": [100.0, 120.0, 100.0, 120.0],
        }
    )


def test_loss_curve_frame(results):
    """Test the flattened loss curve rows."""
    df = loss_curve_frame(results)
    assert len(df) == 6
    assert df.loc[df["method"] == "VGG", "loss"].tolist() == [2.0]


def test_create_loss_figure(results):
    """Test one trace per method and fold."""
    fig = create_loss_figure(results)
    assert isinstance(fig, go.Figure)
    assert [trace.name for trace in fig.data] == ["SB pli 0", "SB pli 1", "VGG pli 0"]
    assert fig.layout.yaxis.type == "log"


def test_create_scatter_figure(predictions):
    """Test method traces and the identity line."""
    fig = create_scatter_figure(predictions)
    assert [trace.name for trace in fig.data] == ["DE", "SB", "identité"]
    identity = fig.data[-1]
    assert list(identity.x) == [98.0, 121.0]
    assert list(identity.x) == list(identity.y)


def test_axis_segment_spans_the_mask():
    """Test that the overlay segment joins the extreme projections."""
    sample = rectangle_sample(0, height=1, width=10)
    segment = axis_segment(measure_mask(sample.mask), sample.image.spacing)
    row = np.argwhere(sample.mask.bits)[0, 0]
    np.testing.assert_allclose(segment[:, 0], [row, row])
    assert abs(segment[1, 1] - segment[0, 1]) == pytest.approx(9.0)


def test_create_overlay_figure():
    """Test the heatmap and segment traces of an overlay."""
    sample = rectangle_sample(2)
    fig = create_overlay_figure(sample.image, measure_mask(sample.mask), title="Cas 2")
    assert isinstance(fig.data[0], go.Heatmap)
    assert isinstance(fig.data[1], go.Scatter)
    assert fig.layout.title.text == "Cas 2"


def test_figures_to_html(predictions):
    """Test that plotly.js is loaded by the first fragment only."""
    fragments = figures_to_html([create_scatter_figure(predictions)] * 2)
    assert len(fragments) == 2
    assert "cdn.plot.ly" in fragments[0]
    assert "cdn.plot.ly" not in fragments[1]
