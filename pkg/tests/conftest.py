import os

import numpy as np
import pytest

from src.data.geometry import measure_mask
from src.utils.models import BinaryMask, GrayImage, Sample

RUN_SLOW = os.environ.get("SPLEENLEN_RUN_SLOW") == "1"


def pytest_collection_modifyitems(config, items):
    """Skip tests marked slow unless SPLEENLEN_RUN_SLOW=1."""
    if RUN_SLOW:
        return
    skip = pytest.mark.skip(reason="set SPLEENLEN_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def rectangle_sample(  # noqa: PLR0913
    case_id, patient_id=None, height=6, width=12, shape=(32, 32), spacing=(1.0, 1.0)
):
    """Build a sample whose reference length is the measured length of its mask."""
    bits = np.zeros(shape, dtype=bool)
    top = 1 + case_id % (shape[0] - height - 1)
    left = 1 + case_id % (shape[1] - width - 1)
    bits[top : top + height, left : left + width] = True
    mask = BinaryMask(bits, spacing)
    measurement = measure_mask(mask)
    pixels = np.where(bits, 0.7, 0.2)
    return Sample(
        image=GrayImage(pixels, spacing),
        mask=mask,
        length_mm=measurement.length_mm,
        length_px=measurement.length_px,
        patient_id=case_id if patient_id is None else patient_id,
        case_id=case_id,
    )


@pytest.fixture
def rectangle_dataset():
    """Twelve rectangles of increasing width, one patient per case."""
    return [rectangle_sample(i, width=8 + i) for i in range(12)]
