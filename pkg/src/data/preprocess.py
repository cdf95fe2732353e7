"""Image preparation: annotation inpainting, intensity normalisation, augmentation.

This module also converts images to network input batches (normalisation and zero
padding to a size divisible by the network downsampling factor).
"""

import logging
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve
from skimage import exposure, transform

from src.utils.config import (
    EQUALIZATION_CLIP,
    EQUALIZATION_TILES,
    INPAINT_ITERATIONS_PER_PIXEL,
    INPAINT_JACOBI_DAMPING,
    INPAINT_MAX_DEFECT_FRACTION,
    INPAINT_TOLERANCE,
)
from src.utils.exceptions import ConfigError, InpaintingError, ShapeError
from src.utils.models import AugmentationSpec, BinaryMask, GrayImage, Sample

logger = logging.getLogger(__name__)

# 13-point discrete biharmonic operator: (row offset, col offset, coefficient)
BIHARMONIC_STENCIL = (
    [(0, 0, 20.0)]
    + [(dy, dx, -8.0) for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1))]
    + [(dy, dx, 2.0) for dy, dx in ((-1, -1), (-1, 1), (1, -1), (1, 1))]
    + [(dy, dx, 1.0) for dy, dx in ((-2, 0), (2, 0), (0, -2), (0, 2))]
)
_STENCIL_REACH = 2


def _biharmonic_system(
    pixels: np.ndarray, defect: np.ndarray
) -> Tuple[sparse.csr_matrix, np.ndarray, Tuple[np.ndarray, np.ndarray]]:
    """Assemble A u = b over the defect pixels with known pixels moved to b."""
    rows, cols = np.nonzero(defect)
    n = rows.size
    index = np.full(defect.shape, -1, dtype=np.int64)
    index[rows, cols] = np.arange(n)

    a_rows, a_cols, a_vals = [], [], []
    rhs = np.zeros(n)
    for dy, dx, coef in BIHARMONIC_STENCIL:
        neighbour = index[rows + dy, cols + dx]
        unknown = neighbour >= 0
        a_rows.append(np.arange(n)[unknown])
        a_cols.append(neighbour[unknown])
        a_vals.append(np.full(int(unknown.sum()), coef))
        known = ~unknown
        rhs[known] -= coef * pixels[rows[known] + dy, cols[known] + dx]
    matrix = sparse.coo_matrix(
        (np.concatenate(a_vals), (np.concatenate(a_rows), np.concatenate(a_cols))),
        shape=(n, n),
    ).tocsr()
    return matrix, rhs, (rows, cols)


def _jacobi(
    matrix: sparse.csr_matrix, rhs: np.ndarray, start: np.ndarray, tolerance: float
):
    diagonal = matrix.diagonal()
    x = start.copy()
    cap = INPAINT_ITERATIONS_PER_PIXEL * rhs.size
    for iteration in range(cap):
        residual = rhs - matrix @ x
        if np.abs(residual).max() < tolerance:
            logger.debug("Jacobi converged after %d iterations", iteration)
            return x
        x += INPAINT_JACOBI_DAMPING * residual / diagonal
    raise InpaintingError(
        f"Damped Jacobi did not reach residual {tolerance:g} within {cap} iterations"
    )


def inpaint_biharmonic(
    image: GrayImage,
    defect_mask: BinaryMask,
    method: str = "direct",
    tolerance: float = INPAINT_TOLERANCE,
) -> GrayImage:
    """Fill defect pixels with the discrete biharmonic interpolant of their border.

    Args:
        image (GrayImage): Image to repair.
        defect_mask (BinaryMask): Pixels to replace (e.g. caliper crosses).
        method (str): ``"direct"`` sparse solve or ``"jacobi"`` damped iterations.
        tolerance (float): Maximum residual infinity norm.

    Returns:
        GrayImage: Repaired copy; pixels outside the defect are unchanged.

    Raises:
        InpaintingError: If the defect is within two pixels of the border, covers 20%
            of the image or more, or the solver does not reach the tolerance.
    """
    if defect_mask.shape != image.shape:
        raise ShapeError(
            f"Defect mask {defect_mask.shape} does not match image {image.shape}"
        )
    if method not in ("direct", "jacobi"):
        raise ConfigError(f"Unknown inpainting method {method!r}")
    defect = defect_mask.bits
    if not defect.any():
        return image.copy()
    if defect.mean() >= INPAINT_MAX_DEFECT_FRACTION:
        raise InpaintingError(
            f"Defect covers {defect.mean():.1%} of the image "
            f"(limit {INPAINT_MAX_DEFECT_FRACTION:.0%})"
        )
    r = _STENCIL_REACH
    border = np.ones_like(defect)
    border[r:-r, r:-r] = False
    if (defect & border).any():
        raise InpaintingError(f"Defect lies within {r} pixels of the image border")

    pixels = image.pixels.copy()
    matrix, rhs, (rows, cols) = _biharmonic_system(pixels, defect)
    if method == "direct":
        solution = spsolve(matrix.tocsc(), rhs)
    else:
        start = np.full(rhs.size, pixels[~defect].mean())
        solution = _jacobi(matrix, rhs, start, tolerance)
    residual = float(np.abs(matrix @ solution - rhs).max())
    logger.debug("Inpainted %d pixels, residual %.2e", rhs.size, residual)
    if not np.isfinite(residual) or residual >= tolerance:
        raise InpaintingError(
            f"Inpainting residual {residual:.2e} exceeds {tolerance:g}"
        )
    pixels[rows, cols] = solution
    return GrayImage(pixels, image.spacing)


def normalize_intensity(image: GrayImage) -> GrayImage:
    """Z-score the image, then map mean to 0.5 and +/- 3 sd to [0, 1] with clipping.

    A constant image maps to a uniform 0.5.
    """
    pixels = image.pixels
    std = pixels.std()
    if std < 1e-12:  # noqa: PLR2004
        return GrayImage(np.full(image.shape, 0.5), image.spacing)
    z = (pixels - pixels.mean()) / std
    return GrayImage(np.clip(0.5 + z / 6.0, 0.0, 1.0), image.spacing)


def gamma_correct(image: GrayImage, gamma: float) -> GrayImage:
    """Pointwise ``u ** gamma`` on [0, 1] intensities."""
    if gamma <= 0:
        raise ConfigError(f"gamma must be > 0, got {gamma}")
    return GrayImage(np.power(np.clip(image.pixels, 0.0, 1.0), gamma), image.spacing)


def adaptive_equalize(
    image: GrayImage, tiles: int = EQUALIZATION_TILES, clip: float = EQUALIZATION_CLIP
) -> GrayImage:
    """Adaptive histogram equalisation (CLAHE) over ``tiles`` x ``tiles`` tiles."""
    h, w = image.shape
    kernel = (max(1, h // tiles), max(1, w // tiles))
    pixels = np.clip(image.pixels, 0.0, 1.0)
    if np.ptp(pixels) == 0:
        return image.copy()
    out = exposure.equalize_adapthist(pixels, kernel_size=kernel, clip_limit=clip)
    return GrayImage(np.clip(out, 0.0, 1.0), image.spacing)


def rotate(
    item: Union[GrayImage, BinaryMask], degrees: float, order: Optional[int] = None
) -> Union[GrayImage, BinaryMask]:
    """Rotate counter-clockwise about the image centre, filling with 0.

    Images use bilinear interpolation and masks nearest neighbour unless ``order`` is
    given.
    """
    if degrees == 0:
        return item.copy()
    if isinstance(item, BinaryMask):
        rotated = transform.rotate(
            item.bits.astype(np.float64),
            degrees,
            order=0 if order is None else order,
            mode="constant",
            cval=0.0,
            preserve_range=True,
        )
        return BinaryMask(rotated > 0.5, item.spacing)  # noqa: PLR2004
    rotated = transform.rotate(
        item.pixels,
        degrees,
        order=1 if order is None else order,
        mode="constant",
        cval=0.0,
        preserve_range=True,
    )
    return GrayImage(np.clip(rotated, 0.0, 1.0), item.spacing)


def augment(sample: Sample, spec: AugmentationSpec, rng_key) -> Sample:
    """Randomly rotate, gamma-correct and equalise one sample.

    The angle, gamma and equalisation draw come from ``np.random.default_rng(rng_key)``
    so the result depends only on the key. Image, mask and annotation are rotated
    jointly; the stored ground-truth lengths are carried over unchanged.
    """
    rng = np.random.default_rng(rng_key)
    angle = rng.uniform(*spec.rotation_range)
    gamma = rng.uniform(*spec.gamma_range)
    equalize = rng.random() < spec.equalization_probability

    image = rotate(sample.image, angle)
    image = gamma_correct(image, gamma)
    if equalize:
        image = adaptive_equalize(image, spec.tiles, spec.clip)
    return Sample(
        image=image,
        mask=rotate(sample.mask, angle) if sample.mask is not None else None,
        length_mm=sample.length_mm,
        length_px=sample.length_px,
        patient_id=sample.patient_id,
        case_id=sample.case_id,
        annotation=(
            rotate(sample.annotation, angle) if sample.annotation is not None else None
        ),
    )


def pad_to_multiple(array: np.ndarray, multiple: int) -> np.ndarray:
    """Zero-pad the last two axes (bottom and right) to multiples of ``multiple``."""
    h, w = array.shape[-2:]
    pad_h, pad_w = (-h) % multiple, (-w) % multiple
    if not (pad_h or pad_w):
        return array
    widths = [(0, 0)] * (array.ndim - 2) + [(0, pad_h), (0, pad_w)]
    return np.pad(array, widths)


def crop_to(array: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    """Crop the last two axes back to ``shape`` (top-left anchored)."""
    return array[..., : shape[0], : shape[1]]


def prepare_batch(images: Sequence[GrayImage], multiple: int) -> np.ndarray:
    """Normalise, pad and stack images into a (N, 1, H, W) network input."""
    shapes = {img.shape for img in images}
    if len(shapes) != 1:
        raise ShapeError(f"Images in a batch must share one size, got {sorted(shapes)}")
    arrays: List[np.ndarray] = [
        pad_to_multiple(normalize_intensity(img).pixels, multiple) for img in images
    ]
    return np.stack(arrays)[:, None]


def prepare_masks(masks: Sequence[BinaryMask], multiple: int) -> np.ndarray:
    """Pad and stack masks into a (N, 1, H, W) float target."""
    return np.stack(
        [pad_to_multiple(m.bits.astype(np.float64), multiple) for m in masks]
    )[:, None]
