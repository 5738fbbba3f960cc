from unittest.mock import Mock

import numpy as np
import pytest

from models.errors import ArgumentError
from models.events import EventType
from data.generators import (ALPHABET_CELL, CHECKER_HALF_WIDTH, CURVE_SCALE, DATASET_NAMES, DatasetGenerator,
                             checkerboard_centers, curve_point, dataset_dimension, generate, letter_pixels,
                             pinwheel_arm_angles, spiral_point)

def test_dataset_names_and_dimensions():
    assert set(DATASET_NAMES) == {"alphabet", "checkerboard", "pinwheel", "spiral", "bent_lissajous",
                                  "interlocked_circles", "knotted", "twisted_eight"}
    assert dataset_dimension("spiral") == 2
    assert dataset_dimension("knotted") == 3

def test_unknown_dataset_rejected():
    with pytest.raises(ArgumentError):
        generate("moons", 10, 0)

def test_count_must_be_positive():
    with pytest.raises(ArgumentError):
        generate("spiral", 0, 0)

@pytest.mark.parametrize("name", DATASET_NAMES)
def test_generation_is_seeded(name):
    first = generate(name, 300, seed=11)
    assert first.shape == (300, dataset_dimension(name))
    assert np.array_equal(first, generate(name, 300, seed=11))
    assert not np.array_equal(first, generate(name, 300, seed=12))

def test_protocol_noise_is_small():
    clean = generate("pinwheel", 5000, seed=3, protocol_noise=False)
    noisy = generate("pinwheel", 5000, seed=3)
    assert np.std(noisy - clean) == pytest.approx(0.01, rel=0.05)


# === SHAPES OF THE DISTRIBUTIONS ===

def test_knotted_curve_at_zero():
    assert np.allclose(curve_point("knotted", 0.0), [0.0, -1.0, 0.0], atol=1e-15)

def test_interlocked_second_branch():
    assert np.allclose(curve_point("interlocked_circles", 0.0, 1), [1.0, 0.0, 1.0])

def test_curve_samples_are_scaled():
    points = generate("bent_lissajous", 2000, seed=0, protocol_noise=False)
    assert np.abs(points).max() <= CURVE_SCALE + 1e-12

def test_pinwheel_arm_angles():
    assert np.allclose(pinwheel_arm_angles(), 2 * np.pi * np.arange(5) / 5)

def test_checkerboard_points_stay_in_their_squares():
    points = generate("checkerboard", 4000, seed=5, protocol_noise=False)
    centers = checkerboard_centers()
    offsets = np.abs(points[:, None, :] - centers[None, :, :]).max(axis=2)
    assert np.all(offsets.min(axis=1) <= CHECKER_HALF_WIDTH + 1e-12)

def test_spiral_starts_at_origin():
    assert np.allclose(spiral_point(0.0), [0.0, 0.0])
    point = spiral_point(np.pi / 2)
    theta = np.sqrt(np.pi / 2) * 2 * np.pi
    assert np.linalg.norm(point) == pytest.approx(2 * theta, rel=1e-12)

def test_alphabet_points_land_on_active_pixels():
    corners = letter_pixels()
    assert len(corners) == 18
    points = generate("alphabet", 2000, seed=2, protocol_noise=False)
    low = corners[None, :, :] - 1e-12
    high = corners[None, :, :] + ALPHABET_CELL + 1e-12
    inside = np.all((points[:, None, :] >= low) & (points[:, None, :] <= high), axis=2)
    assert np.all(inside.any(axis=1))

def test_generator_reports_phase():
    callback = Mock()
    points = DatasetGenerator(seed=4, emit_event_callback=callback).generate("spiral", 50)
    assert points.shape == (50, 2)
    args = callback.call_args.args
    assert args[1] == EventType.PHASE_COMPLETE
    assert args[4]["count"] == 50
