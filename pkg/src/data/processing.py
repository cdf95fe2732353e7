"""Dataset reading and writing.

This module handles the on-disk dataset layout: a ``manifest.csv`` (with the master
seed in a header comment), 16-bit PNG images, 8-bit PNG masks and optional caliper
annotation masks. It validates manifests and reports errors by case identifier.
"""

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

import imageio.v3 as iio
import numpy as np
import pandas as pd

from src.utils.config import (
    ANNOTATIONS_DIR,
    IMAGES_DIR,
    MANIFEST_COLUMNS,
    MANIFEST_NAME,
    MASKS_DIR,
)
from src.utils.exceptions import DatasetError
from src.utils.models import BinaryMask, GrayImage, Sample

logger = logging.getLogger(__name__)

SEED_HEADER = "# seed="
UINT16_MAX = 65535
UINT8_MAX = 255


def case_filename(case_id: int) -> str:
    return f"case_{case_id:04d}.png"


def build_manifest(samples: Sequence[Sample]) -> pd.DataFrame:
    """Return the manifest of ``samples``, paths relative to the dataset root."""
    rows = []
    for s in samples:
        row = {
            "case_id": s.case_id,
            "patient_id": s.patient_id,
            "image_path": f"{IMAGES_DIR}/{case_filename(s.case_id)}",
            "mask_path": (
                f"{MASKS_DIR}/{case_filename(s.case_id)}" if s.mask is not None else ""
            ),
            "sy_mm": s.image.spacing[0],
            "sx_mm": s.image.spacing[1],
            "length_mm": s.length_mm,
            "length_px": s.length_px,
        }
        if s.annotation is not None:
            row["annotation_path"] = f"{ANNOTATIONS_DIR}/{case_filename(s.case_id)}"
        rows.append(row)
    extra = (
        ["annotation_path"] if any(s.annotation is not None for s in samples) else []
    )
    return pd.DataFrame(rows, columns=MANIFEST_COLUMNS + extra)


def to_gray(array: np.ndarray) -> np.ndarray:
    """Convert an 8- or 16-bit array (grayscale or RGB) to float64 in [0, 1]."""
    array = np.asarray(array)
    if array.ndim == 3:  # noqa: PLR2004
        array = array[..., :3].mean(axis=-1).astype(array.dtype)
    if array.dtype == np.uint16:
        return array.astype(np.float64) / UINT16_MAX
    if array.dtype == np.uint8:
        return array.astype(np.float64) / UINT8_MAX
    if np.issubdtype(array.dtype, np.floating):
        return np.clip(array.astype(np.float64), 0.0, 1.0)
    raise DatasetError(f"Unsupported image dtype {array.dtype}")


def read_image(path: Union[str, Path], spacing=(1.0, 1.0)) -> GrayImage:
    """Read an 8- or 16-bit grayscale PNG/PGM image."""
    return GrayImage(to_gray(iio.imread(path)), spacing)


def write_image(path: Union[str, Path], image: GrayImage):
    """Write an image as a 16-bit PNG."""
    values = np.round(np.clip(image.pixels, 0.0, 1.0) * UINT16_MAX).astype(np.uint16)
    iio.imwrite(path, values)


def read_mask(path: Union[str, Path], spacing=(1.0, 1.0)) -> BinaryMask:
    """Read an 8-bit mask (0 background, 255 foreground)."""
    array = np.asarray(iio.imread(path))
    if array.ndim == 3:  # noqa: PLR2004
        array = array[..., 0]
    bits = array > array.max() / 2 if array.max() > 1 else array > 0
    return BinaryMask(bits, spacing)


def write_mask(path: Union[str, Path], mask: BinaryMask):
    """Write a mask as an 8-bit PNG with values 0 and 255."""
    iio.imwrite(path, mask.bits.astype(np.uint8) * UINT8_MAX)


class DatasetProcessor:
    """Class responsible for reading, validating and writing datasets.

    Attributes:
        df (pd.DataFrame): Manifest of the dataset being processed.
    """

    def __init__(self, df: Optional[pd.DataFrame] = None):
        """Initialize the DatasetProcessor with a manifest.

        Args:
            df (Optional[pd.DataFrame]): Manifest table, if already loaded.
        """
        self.df = df if df is not None else pd.DataFrame(columns=MANIFEST_COLUMNS)

    def validate_file_format(self) -> List[str]:
        """Check if the manifest has the required columns.

        Returns:
            List[str]: Missing required columns. Empty list if all are present.
        """
        return [col for col in MANIFEST_COLUMNS if col not in self.df.columns]

    def load_manifest(self, directory: Union[str, Path]) -> pd.DataFrame:
        """Load and validate ``manifest.csv`` from a dataset directory.

        Raises:
            DatasetError: If the manifest is missing, unreadable or incomplete.
        """
        path = Path(directory) / MANIFEST_NAME
        if not path.is_file():
            raise DatasetError(f"No manifest found at {path}")
        try:
            df = pd.read_csv(path, comment="#", float_precision="round_trip")
        except Exception as e:
            raise DatasetError(f"Cannot read manifest {path}: {e}") from e
        self.df = df
        missing = self.validate_file_format()
        if missing:
            raise DatasetError(f"Manifest {path} misses columns: {missing}")
        if df["case_id"].duplicated().any():
            raise DatasetError(f"Manifest {path} has duplicated case ids")
        return df

    @staticmethod
    def read_seed(directory: Union[str, Path]) -> Optional[int]:
        """Return the master seed recorded in the manifest header, if any."""
        path = Path(directory) / MANIFEST_NAME
        with open(path, encoding="utf-8") as f:
            first = f.readline().strip()
        if first.startswith(SEED_HEADER):
            return int(first[len(SEED_HEADER) :])
        return None

    def write_dataset(
        self,
        samples: Sequence[Sample],
        directory: Union[str, Path],
        seed: Optional[int] = None,
    ) -> Path:
        """Write images, masks, annotations and the manifest.

        Returns:
            Path: The manifest path.
        """
        root = Path(directory)
        try:
            for sub in (IMAGES_DIR, MASKS_DIR):
                (root / sub).mkdir(parents=True, exist_ok=True)
            self.df = build_manifest(samples)
            for sample, (_, row) in zip(samples, self.df.iterrows()):
                write_image(root / row["image_path"], sample.image)
                if sample.mask is not None:
                    write_mask(root / row["mask_path"], sample.mask)
                if sample.annotation is not None:
                    (root / ANNOTATIONS_DIR).mkdir(exist_ok=True)
                    write_mask(root / row["annotation_path"], sample.annotation)
            path = root / MANIFEST_NAME
            with open(path, "w", encoding="utf-8", newline="") as f:
                if seed is not None:
                    f.write(f"{SEED_HEADER}{seed}\n")
                self.df.to_csv(f, index=False)
        except OSError as e:
            raise DatasetError(f"Cannot write dataset to {root}: {e}") from e
        logger.info("Wrote %d cases to %s", len(samples), root)
        return path

    def _read_row(self, root: Path, row: pd.Series) -> Sample:
        case_id = int(row["case_id"])
        spacing = (float(row["sy_mm"]), float(row["sx_mm"]))
        try:
            image = read_image(root / row["image_path"], spacing)
        except Exception as e:
            raise DatasetError(
                f"cannot read image {row['image_path']}: {e}", case_id
            ) from e
        mask = None
        if isinstance(row["mask_path"], str) and row["mask_path"]:
            try:
                mask = read_mask(root / row["mask_path"], spacing)
            except Exception as e:
                raise DatasetError(
                    f"cannot read mask {row['mask_path']}: {e}", case_id
                ) from e
            if mask.shape != image.shape:
                raise DatasetError(
                    f"mask shape {mask.shape} differs from image shape {image.shape}",
                    case_id,
                )
        annotation = None
        value = row.get("annotation_path")
        if isinstance(value, str) and value:
            try:
                annotation = read_mask(root / value, spacing)
            except Exception as e:
                raise DatasetError(
                    f"cannot read annotation {value}: {e}", case_id
                ) from e
        return Sample(
            image=image,
            mask=mask,
            length_mm=float(row["length_mm"]),
            length_px=float(row["length_px"]),
            patient_id=int(row["patient_id"]),
            case_id=case_id,
            annotation=annotation,
        )

    def read_dataset(self, directory: Union[str, Path]) -> List[Sample]:
        """Read every case listed in the manifest, ordered by case id.

        Raises:
            DatasetError: On missing files or shape disagreement; the message names
                the case.
        """
        root = Path(directory)
        df = self.load_manifest(root).sort_values("case_id")
        samples = [self._read_row(root, row) for _, row in df.iterrows()]
        logger.info("Read %d cases from %s", len(samples), root)
        return samples


def write_dataset(
    samples: Sequence[Sample], directory: Union[str, Path], seed: Optional[int] = None
) -> Path:
    """Write a dataset directory (see :meth:`DatasetProcessor.write_dataset`)."""
    return DatasetProcessor().write_dataset(samples, directory, seed)


def read_dataset(directory: Union[str, Path]) -> List[Sample]:
    """Read a dataset directory (see :meth:`DatasetProcessor.read_dataset`)."""
    return DatasetProcessor().read_dataset(directory)
