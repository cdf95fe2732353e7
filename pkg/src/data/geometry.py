"""Spleen length measurement from a binary mask.

The measurement keeps the largest 8-connected component, finds its principal axis by
PCA on the pixel-centre coordinates in millimetres and returns the range of the
projections of all pixel centres onto that axis.
"""

import logging
from typing import Tuple

import numpy as np
from scipy import ndimage

from src.utils.exceptions import GeometryError, NoSpleenFoundError
from src.utils.models import AxisMeasurement, BinaryMask

logger = logging.getLogger(__name__)

EIGEN_TIE_RTOL = 1e-9
CANONICAL_AXIS = (1.0, 0.0)


def largest_component(mask: BinaryMask) -> BinaryMask:
    """Keep only the largest 8-connected foreground component.

    Ties go to the component met first in row-major scan order. An empty mask is
    returned unchanged.
    """
    labels, count = ndimage.label(mask.bits, structure=np.ones((3, 3), dtype=int))
    if count <= 1:
        return mask.copy()
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    # argmax returns the smallest label among equal sizes
    return BinaryMask(labels == int(sizes.argmax()), mask.spacing)


def _coordinates_mm(mask: BinaryMask) -> Tuple[np.ndarray, np.ndarray]:
    rows, cols = np.nonzero(mask.bits)
    sy, sx = mask.spacing
    return np.column_stack([rows, cols]).astype(np.float64), np.column_stack(
        [rows * sy, cols * sx]
    )


def canonical_axis(vector: np.ndarray) -> Tuple[float, float]:
    """Normalise and flip so that the first nonzero component is positive."""
    vector = np.asarray(vector, dtype=np.float64)
    vector = vector / np.linalg.norm(vector)
    for component in vector:
        if abs(component) > 1e-12:  # noqa: PLR2004
            if component < 0:
                vector = -vector
            break
    return float(vector[0]), float(vector[1])


def principal_axis(mask: BinaryMask) -> AxisMeasurement:
    """Return centroid and principal axis (lengths left at zero).

    The axis is the eigenvector of the 2x2 covariance of pixel centres in millimetres
    with the largest eigenvalue, in (row, col) order. An eigenvalue tie resolves to
    (1, 0).

    Raises:
        GeometryError: If the mask has fewer than two pixels.
    """
    pixels, points = _coordinates_mm(mask)
    if len(points) < 2:  # noqa: PLR2004
        raise GeometryError(
            f"Principal axis needs at least 2 pixels, got {len(points)}"
        )
    covariance = np.cov(points, rowvar=False, bias=True)
    values, vectors = np.linalg.eigh(covariance)
    if np.isclose(values[1], values[0], rtol=EIGEN_TIE_RTOL, atol=1e-12):
        axis = CANONICAL_AXIS
    else:
        axis = canonical_axis(vectors[:, 1])
    centroid = pixels.mean(axis=0)
    return AxisMeasurement(centroid=(float(centroid[0]), float(centroid[1])), axis=axis)


def length_along_axis(
    mask: BinaryMask, axis: Tuple[float, float]
) -> Tuple[float, float]:
    """Return (length_mm, length_px): projection ranges of the pixel centres.

    ``length_mm`` projects millimetre coordinates; ``length_px`` projects pixel
    coordinates onto the same axis.

    Raises:
        GeometryError: If the mask is empty or the axis is not a unit vector.
    """
    axis = np.asarray(axis, dtype=np.float64)
    if not np.isclose(np.linalg.norm(axis), 1.0, atol=1e-9):
        raise GeometryError(f"Axis {tuple(axis)} is not a unit vector")
    pixels, points = _coordinates_mm(mask)
    if len(points) == 0:
        raise GeometryError("Cannot measure an empty mask")
    return float(np.ptp(points @ axis)), float(np.ptp(pixels @ axis))


def measure_mask(mask: BinaryMask) -> AxisMeasurement:
    """Largest component, principal axis and projection-range length.

    Raises:
        NoSpleenFoundError: If the mask is empty.
    """
    component = largest_component(mask)
    if component.is_empty:
        raise NoSpleenFoundError("No foreground pixel in the mask")
    if component.count == 1:
        row, col = np.argwhere(component.bits)[0]
        return AxisMeasurement((float(row), float(col)), CANONICAL_AXIS)
    measurement = principal_axis(component)
    length_mm, length_px = length_along_axis(component, measurement.axis)
    _, points = _coordinates_mm(component)
    projections = points @ np.asarray(measurement.axis)
    sy, sx = component.spacing
    centre = measurement.centroid[0] * sy * measurement.axis[0] + (
        measurement.centroid[1] * sx * measurement.axis[1]
    )
    logger.debug("Measured %d pixels: %.2f mm", component.count, length_mm)
    return AxisMeasurement(
        centroid=measurement.centroid,
        axis=measurement.axis,
        length_px=length_px,
        length_mm=length_mm,
        projection_range_mm=(
            float(projections.min() - centre),
            float(projections.max() - centre),
        ),
    )
