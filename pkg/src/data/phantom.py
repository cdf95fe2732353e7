"""Synthetic ultrasound-like spleen phantoms with analytically known lengths.

Each case is a rotated, optionally bent ellipse drawn from a generator keyed by
(master seed, case index). The ground-truth length is the projection range of 10^4
boundary points of the continuous shape onto its principal axis, so the generator,
not the rasterised mask, is the authority on length.
"""

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
import pandas as pd
from scipy import ndimage
from tqdm import tqdm

from src.data.geometry import (
    CANONICAL_AXIS,
    EIGEN_TIE_RTOL,
    canonical_axis,
    measure_mask,
)
from src.data.processing import build_manifest
from src.utils.config import (
    PHANTOM_BOUNDARY_SAMPLES,
    PHANTOM_MAX_CASES_PER_PATIENT,
    PHANTOM_MAX_RETRIES,
    PHANTOM_SELF_CHECK_PX,
)
from src.utils.exceptions import PhantomError
from src.utils.logging_setup import progress_enabled
from src.utils.models import BinaryMask, GrayImage, PhantomConfig, Sample

logger = logging.getLogger(__name__)

CASE_STREAM = 0
PATIENT_STREAM = 1
BORDER_MARGIN = 4
CALIPER_ARM = 2
AREA_GRID_STEP = 0.1
TEXTURE_SIGMA = 3.0
TEXTURE_AMPLITUDE = 0.2
QUANTIZATION_LEVELS = 65535


@dataclass(frozen=True)
class BentEllipse:
    """Ellipse ``(u/a)^2 + ((v - bend * a * (u/a)^2) / b)^2 <= 1`` placed in the image.

    ``u`` runs along the long axis at ``angle_deg`` from the column axis; coordinates
    are (row, col) pixel positions.
    """

    a: float
    b: float
    bend: float
    angle_deg: float
    center: Tuple[float, float]

    @property
    def _frame(self) -> Tuple[np.ndarray, np.ndarray]:
        theta = np.deg2rad(self.angle_deg)
        e_u = np.array([np.sin(theta), np.cos(theta)])
        e_v = np.array([np.cos(theta), -np.sin(theta)])
        return e_u, e_v

    def contains(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        e_u, e_v = self._frame
        dr, dc = rows - self.center[0], cols - self.center[1]
        u = dr * e_u[0] + dc * e_u[1]
        v = dr * e_v[0] + dc * e_v[1]
        s = u / self.a
        return s**2 + ((v - self.bend * self.a * s**2) / self.b) ** 2 <= 1.0

    def boundary(self, samples: int = PHANTOM_BOUNDARY_SAMPLES) -> np.ndarray:
        """Return ``samples`` boundary points as an (n, 2) array of (row, col)."""
        t = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
        u = self.a * np.cos(t)
        v = self.b * np.sin(t) + self.bend * self.a * np.cos(t) ** 2
        e_u, e_v = self._frame
        return np.asarray(self.center) + np.outer(u, e_u) + np.outer(v, e_v)

    def rasterize(self, height: int, width: int) -> np.ndarray:
        rows, cols = np.mgrid[0:height, 0:width]
        return self.contains(rows.astype(np.float64), cols.astype(np.float64))


@dataclass(frozen=True)
class AnalyticLength:
    """Length of the continuous shape along its principal axis.

    Attributes:
        length_mm (float): Projection range in millimetres.
        length_px (float): Projection range of pixel coordinates on the same axis.
        axis (Tuple[float, float]): Unit principal axis (row, col) in millimetre space.
        endpoints (Tuple[Tuple[float, float], Tuple[float, float]]): Boundary points
            (row, col) with extreme projections.
    """

    length_mm: float
    length_px: float
    axis: Tuple[float, float]
    endpoints: Tuple[Tuple[float, float], Tuple[float, float]]


def analytic_length(shape: BentEllipse, spacing: Tuple[float, float]) -> AnalyticLength:
    """Measure a continuous shape: area covariance axis, boundary projection range."""
    boundary = shape.boundary()
    low, high = boundary.min(axis=0), boundary.max(axis=0)
    rows, cols = np.meshgrid(
        np.arange(low[0], high[0], AREA_GRID_STEP),
        np.arange(low[1], high[1], AREA_GRID_STEP),
        indexing="ij",
    )
    inside = shape.contains(rows, cols)
    scale = np.asarray(spacing, dtype=np.float64)
    points = np.column_stack([rows[inside], cols[inside]]) * scale
    values, vectors = np.linalg.eigh(np.cov(points, rowvar=False, bias=True))
    if np.isclose(values[1], values[0], rtol=EIGEN_TIE_RTOL):
        axis = np.asarray(CANONICAL_AXIS)
    else:
        axis = np.asarray(canonical_axis(vectors[:, 1]))
    projections = (boundary * scale) @ axis
    first, last = boundary[projections.argmin()], boundary[projections.argmax()]
    return AnalyticLength(
        length_mm=float(np.ptp(projections)),
        length_px=float(np.ptp(boundary @ axis)),
        axis=(float(axis[0]), float(axis[1])),
        endpoints=(
            (float(first[0]), float(first[1])),
            (float(last[0]), float(last[1])),
        ),
    )


def assign_patients(count: int, n_patients: int, seed: int) -> np.ndarray:
    """Return the patient id of each case; every patient holds 1 to 4 cases."""
    rng = np.random.default_rng([seed, PATIENT_STREAM])
    sizes = np.ones(n_patients, dtype=np.int64)
    for _ in range(count - n_patients):
        available = np.flatnonzero(sizes < PHANTOM_MAX_CASES_PER_PATIENT)
        sizes[rng.choice(available)] += 1
    return rng.permutation(np.repeat(np.arange(n_patients), sizes))


def _draw_shape(rng: np.random.Generator, config: PhantomConfig) -> BentEllipse:
    h, w = config.height, config.width
    return BentEllipse(
        a=rng.uniform(*config.semi_major_range),
        b=rng.uniform(*config.semi_minor_range),
        bend=rng.uniform(*config.bend_range),
        angle_deg=rng.uniform(*config.rotation_range),
        center=(rng.uniform(0.35 * h, 0.65 * h), rng.uniform(0.35 * w, 0.65 * w)),
    )


def _in_bounds(points: np.ndarray, height: int, width: int) -> bool:
    m = BORDER_MARGIN
    return bool(
        points[:, 0].min() >= m
        and points[:, 1].min() >= m
        and points[:, 0].max() <= height - 1 - m
        and points[:, 1].max() <= width - 1 - m
    )


def render_image(
    mask: np.ndarray, rng: np.random.Generator, config: PhantomConfig
) -> np.ndarray:
    """Render intensities for a spleen mask.

    Spleen at 0.5, fat band at 0.5 - contrast, textured background around
    0.5 - contrast / 2, multiplicative gamma speckle of mean one, then a linear
    depth attenuation. Values are clipped and quantised to 16 bits.
    """
    h, w = mask.shape
    delta = config.contrast
    distance = ndimage.distance_transform_edt(~mask)
    fat = ~mask & (distance <= config.fat_band_px)
    texture = ndimage.gaussian_filter(rng.standard_normal((h, w)), sigma=TEXTURE_SIGMA)
    texture /= max(np.abs(texture).max(), 1e-12)
    image = 0.5 - 0.5 * delta + TEXTURE_AMPLITUDE * delta * texture
    image[fat] = 0.5 - delta
    image[mask] = 0.5
    if config.speckle > 0:
        image *= rng.gamma(1.0 / config.speckle, config.speckle, size=(h, w))
    depth = np.arange(h) / max(h - 1, 1)
    image *= (1.0 - config.attenuation * depth)[:, None]
    image = np.clip(image, 0.0, 1.0)
    return np.round(image * QUANTIZATION_LEVELS) / QUANTIZATION_LEVELS


def caliper_mask(
    endpoints: Tuple[Tuple[float, float], Tuple[float, float]], shape: Tuple[int, int]
) -> np.ndarray:
    """Return the pixels of '+' crosses centred on the rounded endpoints."""
    cross = np.zeros(shape, dtype=bool)
    for row, col in endpoints:
        r, c = int(round(row)), int(round(col))
        cross[r - CALIPER_ARM : r + CALIPER_ARM + 1, c] = True
        cross[r, c - CALIPER_ARM : c + CALIPER_ARM + 1] = True
    return cross


def generate_case(
    config: PhantomConfig, case_index: int, patient_id: int = 0
) -> Sample:
    """Generate one case from the stream keyed by (seed, case index).

    Raises:
        PhantomError: If no valid shape is found within the retry budget.
    """
    rng = np.random.default_rng([config.seed, CASE_STREAM, case_index])
    h, w = config.height, config.width
    for _ in range(PHANTOM_MAX_RETRIES):
        shape = _draw_shape(rng, config)
        if not _in_bounds(shape.boundary(), h, w):
            continue
        bits = shape.rasterize(h, w)
        if bits.sum() < 2:  # noqa: PLR2004
            continue
        length = analytic_length(shape, config.spacing)
        mask = BinaryMask(bits, config.spacing)
        if abs(measure_mask(mask).length_px - length.length_px) > PHANTOM_SELF_CHECK_PX:
            continue
        break
    else:
        raise PhantomError(
            f"case {case_index}: no valid shape after {PHANTOM_MAX_RETRIES} attempts"
        )

    pixels = render_image(bits, rng, config)
    annotation = None
    if config.calipers:
        cross = caliper_mask(length.endpoints, (h, w))
        pixels[cross] = 1.0
        annotation = BinaryMask(cross, config.spacing)
    return Sample(
        image=GrayImage(pixels, config.spacing),
        mask=mask,
        length_mm=length.length_mm,
        length_px=length.length_px,
        patient_id=int(patient_id),
        case_id=int(case_index),
        annotation=annotation,
    )


def generate(config: PhantomConfig) -> Tuple[List[Sample], pd.DataFrame]:
    """Generate ``config.count`` cases and their manifest.

    Args:
        config (PhantomConfig): Generator configuration.

    Returns:
        Tuple[List[Sample], pd.DataFrame]: Samples ordered by case id and the
            manifest table (paths relative to a dataset directory).
    """
    config.validate()
    patients = assign_patients(config.count, config.patients, config.seed)
    samples = [
        generate_case(config, i, patients[i])
        for i in tqdm(
            range(config.count),
            desc="phantoms",
            disable=not progress_enabled(),
            leave=False,
        )
    ]
    logger.info(
        "Generated %d phantoms from %d patients (seed %d)",
        len(samples),
        len(set(patients.tolist())),
        config.seed,
    )
    return samples, build_manifest(samples)
