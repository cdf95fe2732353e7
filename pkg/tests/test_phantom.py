# ruff: noqa: PLR2004

import numpy as np
import pytest

from src.data.geometry import measure_mask
from src.data.metrics import ple
from src.data.phantom import (
    BentEllipse,
    analytic_length,
    assign_patients,
    caliper_mask,
    generate,
    generate_case,
)
from src.services.backends import ModelSettings, NetworkBackend
from src.utils.exceptions import ConfigError
from src.utils.models import PhantomConfig, TrainPlan


@pytest.fixture
def small_config():
    """Create a configuration for six phantoms."""
    return PhantomConfig(count=6, seed=3)


def test_generation_is_deterministic(small_config):
    """Test that one seed gives identical images, masks and lengths."""
    first, manifest_a = generate(small_config)
    second, manifest_b = generate(small_config)
    for a, b in zip(first, second):
        assert np.array_equal(a.image.pixels, b.image.pixels)
        assert np.array_equal(a.mask.bits, b.mask.bits)
        assert a.length_mm == b.length_mm
    assert manifest_a.equals(manifest_b)


def test_case_depends_only_on_seed_and_index(small_config):
    """Test that a case does not depend on how many cases are generated."""
    samples, _ = generate(small_config)
    again = generate_case(small_config, 4, samples[4].patient_id)
    assert np.array_equal(again.image.pixels, samples[4].image.pixels)


def test_different_seeds_differ(small_config):
    """Test that the master seed changes the cases."""
    a = generate_case(small_config, 0)
    b = generate_case(PhantomConfig(count=6, seed=4), 0)
    assert not np.array_equal(a.mask.bits, b.mask.bits)


def test_rasterised_length_matches_analytic(small_config):
    """Test the generator self-check: mask and analytic lengths within 2 pixels."""
    samples, manifest = generate(small_config)
    for sample in samples:
        assert abs(measure_mask(sample.mask).length_px - sample.length_px) <= 2.0
        assert sample.image.spacing == (1.5, 1.5)
        assert sample.image.pixels.min() >= 0.0
        assert sample.image.pixels.max() <= 1.0
    assert manifest["case_id"].tolist() == list(range(6))


def test_spleen_is_brighter_than_fat_band():
    """Test the contrast between spleen and its surroundings without speckle."""
    sample = generate_case(PhantomConfig(count=1, speckle=0.0, attenuation=0.0), 0)
    inside = sample.image.pixels[sample.mask.bits]
    assert np.allclose(inside, 0.5, atol=1e-4)
    assert sample.image.pixels[~sample.mask.bits].mean() < 0.45


def test_analytic_length_of_plain_ellipse():
    """Test that an unbent ellipse measures twice its semi-major axis."""
    shape = BentEllipse(a=20.0, b=8.0, bend=0.0, angle_deg=0.0, center=(32.0, 48.0))
    length = analytic_length(shape, (1.0, 1.0))
    assert length.length_px == pytest.approx(40.0, abs=1e-3)
    assert abs(length.axis[1]) == pytest.approx(1.0, abs=1e-6)
    assert analytic_length(shape, (2.0, 2.0)).length_mm == pytest.approx(80.0, abs=1e-2)


def test_assign_patients_bounds():
    """Test that every patient holds one to four cases."""
    patients = assign_patients(108, 93, seed=0)
    counts = np.bincount(patients)
    assert len(patients) == 108
    assert len(counts) == 93
    assert counts.min() >= 1
    assert counts.max() <= 4
    assert np.array_equal(patients, assign_patients(108, 93, seed=0))


def test_default_patient_count():
    """Test the derived patient count of the default configuration."""
    assert PhantomConfig().patients == 93
    assert PhantomConfig(count=6).patients == 5


def test_calipers_are_burned_and_annotated():
    """Test that caliper crosses set pixels to 1 and are recorded."""
    sample = generate_case(PhantomConfig(count=1, calipers=True), 0)
    assert sample.annotation is not None
    assert sample.annotation.count == 18
    assert np.all(sample.image.pixels[sample.annotation.bits] == 1.0)


def test_caliper_mask_shape():
    """Test the plus shape drawn at each endpoint."""
    cross = caliper_mask(((5.2, 5.0), (10.0, 14.6)), (20, 20))
    assert cross.sum() == 18
    assert cross[5, 3] and cross[5, 7] and cross[3, 5]
    assert cross[10, 15]


@pytest.mark.parametrize(
    "kwargs",
    [
        {"count": 0},
        {"semi_major_range": (10.0, 12.0), "semi_minor_range": (11.0, 13.0)},
        {"semi_major_range": (20.0, 60.0)},
        {"contrast": 0.0},
        {"attenuation": 1.0},
        {"count": 9, "n_patients": 2},
        {"count": 3, "n_patients": 4},
    ],
)
def test_config_validation(kwargs):
    """Test that invalid generator settings raise ConfigError."""
    with pytest.raises(ConfigError):
        PhantomConfig(**kwargs).validate()


@pytest.mark.slow
def test_five_hundred_phantoms_are_self_consistent():
    """Test mask against analytic length on 500 phantoms, and regeneration."""
    config = PhantomConfig(count=500, seed=11)
    samples, manifest = generate(config)
    for sample in samples:
        assert abs(measure_mask(sample.mask).length_px - sample.length_px) <= 2.0
    again, manifest_again = generate(config)
    for a, b in zip(samples, again):
        assert np.array_equal(a.image.pixels, b.image.pixels)
        assert np.array_equal(a.mask.bits, b.mask.bits)
    assert manifest.equals(manifest_again)


def _held_out_ple(contrast):
    samples, _ = generate(PhantomConfig(count=50, seed=21, contrast=contrast))
    backend = NetworkBackend(ModelSettings(seed=0))
    fitted = backend.fit("SB", samples[:40], 0.0, TrainPlan(epochs=40, seed=0))
    measurements = backend.predict(fitted, samples[40:])
    return ple([m.pred_mm for m in measurements], [s.length_mm for s in samples[40:]])


@pytest.mark.slow
def test_low_contrast_phantoms_are_harder():
    """Test that a weak spleen/fat contrast does not make segmentation easier."""
    assert _held_out_ple(0.05) >= _held_out_ple(0.3)
