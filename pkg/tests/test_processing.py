# ruff: noqa: PLR2004

import numpy as np
import pandas as pd
import pytest

from src.data.processing import (
    DatasetProcessor,
    build_manifest,
    read_dataset,
    to_gray,
    write_dataset,
)
from src.utils.config import MANIFEST_COLUMNS, MANIFEST_NAME
from src.utils.exceptions import DatasetError
from src.utils.models import BinaryMask
from tests.conftest import rectangle_sample


@pytest.fixture
def samples():
    """Create three rectangle samples, the last one with an annotation."""
    cases = [
        rectangle_sample(i, patient_id=i // 2, spacing=(0.5, 0.75)) for i in range(3)
    ]
    bits = np.zeros((32, 32), dtype=bool)
    bits[10, 8:13] = True
    cases[2].annotation = BinaryMask(bits, (0.5, 0.75))
    return cases


@pytest.fixture
def dataset_dir(samples, tmp_path):
    """Write the sample dataset with seed 11 and return its directory."""
    write_dataset(samples, tmp_path / "data", seed=11)
    return tmp_path / "data"


def test_validate_file_format_complete(samples):
    """Test validate_file_format with a complete manifest."""
    processor = DatasetProcessor(build_manifest(samples))
    assert processor.validate_file_format() == []


def test_validate_file_format_missing_columns(samples):
    """Test validate_file_format with missing columns."""
    df = build_manifest(samples).drop(columns=["length_mm", "patient_id"])
    missing = DatasetProcessor(df).validate_file_format()
    assert len(missing) == 2
    assert "length_mm" in missing
    assert "patient_id" in missing


def test_build_manifest_columns(samples):
    """Test manifest layout, including the optional annotation column."""
    manifest = build_manifest(samples)
    assert list(manifest.columns) == MANIFEST_COLUMNS + ["annotation_path"]
    assert manifest.loc[0, "image_path"] == "images/case_0000.png"
    assert pd.isna(manifest.loc[0, "annotation_path"])
    assert list(build_manifest(samples[:2]).columns) == MANIFEST_COLUMNS


def test_dataset_round_trip(samples, dataset_dir):
    """Test that a written dataset reads back with equal masks, lengths and spacing."""
    loaded = read_dataset(dataset_dir)
    assert [s.case_id for s in loaded] == [0, 1, 2]
    assert [s.patient_id for s in loaded] == [0, 0, 1]
    for original, restored in zip(samples, loaded):
        assert np.array_equal(original.mask.bits, restored.mask.bits)
        assert restored.length_mm == original.length_mm
        assert restored.length_px == original.length_px
        assert restored.image.spacing == (0.5, 0.75)
        np.testing.assert_allclose(
            restored.image.pixels, original.image.pixels, atol=1e-5
        )
    assert loaded[0].annotation is None
    assert np.array_equal(loaded[2].annotation.bits, samples[2].annotation.bits)


def test_read_seed(dataset_dir, tmp_path):
    """Test the master seed recorded in the manifest header."""
    assert DatasetProcessor.read_seed(dataset_dir) == 11
    write_dataset([rectangle_sample(0)], tmp_path / "unseeded")
    assert DatasetProcessor.read_seed(tmp_path / "unseeded") is None


def test_missing_manifest(tmp_path):
    """Test that a directory without manifest is refused."""
    with pytest.raises(DatasetError, match="No manifest"):
        read_dataset(tmp_path)


def test_manifest_missing_columns(dataset_dir):
    """Test that an incomplete manifest is refused."""
    path = dataset_dir / MANIFEST_NAME
    df = pd.read_csv(path, comment="#").drop(columns=["length_px"])
    df.to_csv(path, index=False)
    with pytest.raises(DatasetError, match="length_px"):
        read_dataset(dataset_dir)


def test_manifest_duplicate_case_ids(dataset_dir):
    """Test that duplicated case ids are refused."""
    path = dataset_dir / MANIFEST_NAME
    df = pd.read_csv(path, comment="#")
    df.loc[1, "case_id"] = 0
    df.to_csv(path, index=False)
    with pytest.raises(DatasetError, match="duplicated"):
        read_dataset(dataset_dir)


def test_corrupt_image_names_the_case(dataset_dir):
    """Test that an unreadable image is reported with its case id."""
    (dataset_dir / "images" / "case_0001.png").write_bytes(b"not a png")
    with pytest.raises(DatasetError, match="case 1") as excinfo:
        read_dataset(dataset_dir)
    assert excinfo.value.case_id == 1


def test_missing_mask_names_the_case(dataset_dir):
    """Test that a missing mask file is reported with its case id."""
    (dataset_dir / "masks" / "case_0002.png").unlink()
    with pytest.raises(DatasetError, match="case 2"):
        read_dataset(dataset_dir)


def test_to_gray():
    """Test conversion of 8-bit, 16-bit, RGB and float arrays."""
    np.testing.assert_allclose(
        to_gray(np.array([[0, 255]], dtype=np.uint8)), [[0.0, 1.0]]
    )
    np.testing.assert_allclose(to_gray(np.array([[65535]], dtype=np.uint16)), [[1.0]])
    rgb = np.full((2, 2, 3), 255, dtype=np.uint8)
    assert to_gray(rgb).shape == (2, 2)
    np.testing.assert_allclose(to_gray(np.array([[1.5, -0.5]])), [[1.0, 0.0]])
    with pytest.raises(DatasetError):
        to_gray(np.array([[1]], dtype=np.int32))
