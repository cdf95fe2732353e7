"""Visualization module.

This module provides the plotly figures embedded in the experiment report: training
loss curves, predicted versus ground-truth lengths and measurement overlays.
"""

from typing import Dict, List, Sequence

import numpy as np
import pandas as pd
import plotly
from natsort import natsorted

from src.utils.models import AxisMeasurement, GrayImage, MethodResult

METHOD_COLORS = {
    "SB": "#1f77b4",
    "DE": "#ff7f0e",
    "DEW": "#2ca02c",
    "VGG": "#d62728",
}


def loss_curve_frame(results: Dict[str, MethodResult]) -> pd.DataFrame:
    """Flatten the final-model loss curves into (method, fold, epoch, loss) rows.

    Args:
        results (Dict[str, MethodResult]): Experiment results by method.

    Returns:
        pd.DataFrame: One row per recorded epoch.
    """
    rows = [
        {"method": method, "fold": fold, "epoch": epoch, "loss": loss}
        for method, result in results.items()
        for fold, curve in sorted(result.loss_curves.items())
        for epoch, loss in enumerate(curve)
    ]
    return pd.DataFrame(rows, columns=["method", "fold", "epoch", "loss"])


def create_loss_figure(results: Dict[str, MethodResult]) -> plotly.graph_objects.Figure:
    """Create one line per (method, outer fold) training loss curve."""
    df = loss_curve_frame(results)
    fig = plotly.graph_objects.Figure()
    for (method, fold), group in df.groupby(["method", "fold"], sort=False):
        fig.add_trace(
            plotly.graph_objects.Scatter(
                x=group["epoch"],
                y=group["loss"],
                mode="lines",
                name=f"{method} pli {fold}",
                line=dict(color=METHOD_COLORS.get(method)),
            )
        )
    fig.update_layout(
        xaxis_title="Époque",
        yaxis_title="Perte d'entraînement",
        yaxis_type="log",
        template="plotly_white",
        margin=dict(t=10, b=10, l=10, r=10),
    )
    return fig


def create_scatter_figure(predictions: pd.DataFrame) -> plotly.graph_objects.Figure:
    """Create the predicted versus ground-truth length scatter, one trace per method.

    Args:
        predictions (pd.DataFrame): Table with columns case_id, method, pred_mm, gt_mm.

    Returns:
        plotly.graph_objects.Figure: Scatter plot with the identity line.
    """
    fig = plotly.graph_objects.Figure()
    for method in natsorted(predictions["method"].unique()):
        group = predictions[predictions["method"] == method]
        fig.add_trace(
            plotly.graph_objects.Scatter(
                x=group["gt_mm"],
                y=group["pred_mm"],
                mode="markers",
                name=method,
                marker=dict(color=METHOD_COLORS.get(method), size=6),
                text=[f"cas {c}" for c in group["case_id"]],
                hovertemplate="%{text}<br>réf. %{x:.1f} mm<br>préd. %{y:.1f} mm",
            )
        )
    if not predictions.empty:
        low = float(min(predictions["gt_mm"].min(), predictions["pred_mm"].min()))
        high = float(max(predictions["gt_mm"].max(), predictions["pred_mm"].max()))
        fig.add_trace(
            plotly.graph_objects.Scatter(
                x=[low, high],
                y=[low, high],
                mode="lines",
                name="identité",
                line=dict(color="gray", dash="dash"),
            )
        )
    fig.update_layout(
        xaxis_title="Longueur de référence (mm)",
        yaxis_title="Longueur prédite (mm)",
        template="plotly_white",
        xaxis_scaleanchor="y",
        margin=dict(t=10, b=10, l=10, r=10),
    )
    return fig


def axis_segment(measurement: AxisMeasurement, spacing: Sequence[float]) -> np.ndarray:
    """Return the (2, 2) pixel coordinates (row, col) of the measured length segment."""
    sy, sx = spacing
    axis = np.asarray(measurement.axis)
    centroid_mm = np.array([measurement.centroid[0] * sy, measurement.centroid[1] * sx])
    ends = [centroid_mm + t * axis for t in measurement.projection_range_mm]
    return np.array([[p[0] / sy, p[1] / sx] for p in ends])


def create_overlay_figure(
    image: GrayImage, measurement: AxisMeasurement, title: str = ""
) -> plotly.graph_objects.Figure:
    """Show an image with the principal-axis segment of its measured mask.

    Args:
        image (GrayImage): Image to display.
        measurement (AxisMeasurement): Measurement of the predicted mask.
        title (str): Figure title.

    Returns:
        plotly.graph_objects.Figure: Grayscale heatmap with the segment on top.
    """
    segment = axis_segment(measurement, image.spacing)
    fig = plotly.graph_objects.Figure(
        data=[
            plotly.graph_objects.Heatmap(
                z=image.pixels, colorscale="gray", zmin=0, zmax=1, showscale=False
            ),
            plotly.graph_objects.Scatter(
                x=segment[:, 1],
                y=segment[:, 0],
                mode="lines+markers",
                line=dict(color="#ffdd00", width=2),
                marker=dict(symbol="cross", size=8),
                name=f"{measurement.length_mm:.1f} mm",
            ),
        ]
    )
    h, w = image.shape
    fig.update_layout(
        title=title or None,
        xaxis=dict(showgrid=False, range=[-0.5, w - 0.5]),
        yaxis=dict(showgrid=False, range=[h - 0.5, -0.5], scaleanchor="x"),
        template="plotly_white",
        width=3 * w + 60,
        height=3 * h + 60,
        showlegend=True,
        margin=dict(t=30 if title else 0, b=10, l=10, r=10),
    )
    return fig


def figures_to_html(figures: List[plotly.graph_objects.Figure]) -> List[str]:
    """Render figures as HTML fragments that load plotly.js once."""
    return [
        fig.to_html(full_html=False, include_plotlyjs="cdn" if i == 0 else False)
        for i, fig in enumerate(figures)
    ]
