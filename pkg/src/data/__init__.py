"""Data processing and analysis module.

This package provides the image side of the toolkit: phantom generation, dataset
reading and writing, preprocessing and inpainting, length measurement and metrics.
"""

from src.data.geometry import measure_mask
from src.data.metrics import dice_coefficient, hausdorff_distance, pearson_r, ple
from src.data.phantom import generate
from src.data.processing import DatasetProcessor, read_dataset, write_dataset

__all__ = [
    "DatasetProcessor",
    "dice_coefficient",
    "generate",
    "hausdorff_distance",
    "measure_mask",
    "pearson_r",
    "ple",
    "read_dataset",
    "write_dataset",
]
