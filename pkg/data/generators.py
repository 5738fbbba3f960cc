"""
Seeded generators for the synthetic 2-D and 3-D benchmark distributions.

Every dataset is drawn from a counter-based Philox generator, so the same
(name, count, seed) gives the same matrix on every platform. Dataset
specific noise is applied inside each recipe; the protocol noise
N(0, 0.01^2 I) is added afterwards unless ``protocol_noise`` is off.
"""

import sys
import os
from typing import Callable, Dict, Tuple

import numpy as np

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.errors import ArgumentError
from models.events import EventType, default_event_handler

PROTOCOL_NOISE = 0.01
CURVE_SCALE = 4.0

CHECKER_CENTERS = (-1.5, 0.0, 1.5)
CHECKER_HALF_WIDTH = 0.6
CHECKER_NOISE = 0.15

PINWHEEL_ARMS = 5
PINWHEEL_RADIUS = (1.0, 0.3)
PINWHEEL_ANGLE_NOISE = 0.2

SPIRAL_NOISE = 0.1

ALPHABET_CELL = 0.2
ALPHABET_LETTER_GAP = 0.4  # multi-letter layouts are not generated
LETTER_W = (
    "X...X",
    "X...X",
    "X...X",
    "X.X.X",
    "X.X.X",
    "XX.XX",
    "X...X",
)


def checkerboard_centers() -> np.ndarray:
    return np.array([(x, y) for x in CHECKER_CENTERS for y in CHECKER_CENTERS])


def pinwheel_arm_angles() -> np.ndarray:
    return 2.0 * np.pi * np.arange(PINWHEEL_ARMS) / PINWHEEL_ARMS


def _checkerboard(rng: np.random.Generator, n: int) -> np.ndarray:
    centers = checkerboard_centers()[rng.integers(0, 9, size=n)]
    points = centers + rng.uniform(-CHECKER_HALF_WIDTH, CHECKER_HALF_WIDTH, size=(n, 2))
    points = points + rng.normal(0.0, CHECKER_NOISE, size=(n, 2))
    return np.clip(points, centers - CHECKER_HALF_WIDTH, centers + CHECKER_HALF_WIDTH)


def _pinwheel(rng: np.random.Generator, n: int) -> np.ndarray:
    arms = pinwheel_arm_angles()[rng.integers(0, PINWHEEL_ARMS, size=n)]
    radius = rng.normal(PINWHEEL_RADIUS[0], PINWHEEL_RADIUS[1], size=n)
    theta = arms + rng.normal(0.0, PINWHEEL_ANGLE_NOISE, size=n)
    return np.column_stack([radius * np.cos(theta), radius * np.sin(theta)])


def spiral_point(theta_raw, sign: float = 1.0) -> np.ndarray:
    """Noiseless spiral point for a raw angle draw in [0, 2 pi)."""
    theta = np.sqrt(np.asarray(theta_raw, dtype=float)) * 2.0 * np.pi
    r = 2.0 * theta
    return sign * np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)


def _spiral(rng: np.random.Generator, n: int) -> np.ndarray:
    signs = np.where(rng.integers(0, 2, size=n) == 0, 1.0, -1.0)
    theta_raw = rng.uniform(0.0, 2.0 * np.pi, size=n)
    points = spiral_point(theta_raw) * signs[:, None]
    return points + rng.normal(0.0, SPIRAL_NOISE, size=(n, 2))


def letter_pixels(bitmap=LETTER_W) -> np.ndarray:
    """Lower-left corners of the active pixels; row 0 is the top row."""
    rows = len(bitmap)
    corners = [(col * ALPHABET_CELL, (rows - 1 - row) * ALPHABET_CELL)
               for row, line in enumerate(bitmap) for col, ch in enumerate(line) if ch == "X"]
    return np.array(corners)


def _alphabet(rng: np.random.Generator, n: int) -> np.ndarray:
    corners = letter_pixels()
    picked = corners[rng.integers(0, len(corners), size=n)]
    return picked + rng.uniform(0.0, ALPHABET_CELL, size=(n, 2))


# === 3-D parametric curves ===

def _bent_lissajous(t, branch):
    return np.stack([np.sin(2 * t), np.cos(t), np.cos(2 * t)], axis=-1)


def _interlocked_circles(t, branch):
    first = np.stack([np.sin(t), np.cos(t), np.zeros_like(t)], axis=-1)
    second = np.stack([1.0 + np.sin(t), np.zeros_like(t), np.cos(t)], axis=-1)
    return np.where(np.asarray(branch)[..., None] == 0, first, second)


def _knotted(t, branch):
    return np.stack([np.sin(t) + 2 * np.sin(2 * t), np.cos(t) - 2 * np.cos(2 * t), np.sin(3 * t)], axis=-1)


def _twisted_eight(t, branch):
    first = np.stack([np.sin(t), np.cos(t), np.zeros_like(t)], axis=-1)
    second = np.stack([2.0 + np.sin(t), np.zeros_like(t), np.cos(t)], axis=-1)
    return np.where(np.asarray(branch)[..., None] == 0, first, second)


CURVES: Dict[str, Tuple[Callable, int]] = {
    "bent_lissajous": (_bent_lissajous, 1),
    "interlocked_circles": (_interlocked_circles, 2),
    "knotted": (_knotted, 1),
    "twisted_eight": (_twisted_eight, 2),
}


def curve_point(name: str, t, branch=0) -> np.ndarray:
    """Noiseless, unscaled point(s) of a 3-D curve at parameter t."""
    if name not in CURVES:
        raise ArgumentError(f"Unknown curve '{name}' (expected one of {sorted(CURVES)})")
    t = np.asarray(t, dtype=float)
    return CURVES[name][0](t, np.broadcast_to(np.asarray(branch), t.shape))


def _curve_sampler(name: str):
    def sample(rng: np.random.Generator, n: int) -> np.ndarray:
        t = rng.uniform(-np.pi, np.pi, size=n)
        branches = CURVES[name][1]
        branch = rng.integers(0, branches, size=n) if branches > 1 else np.zeros(n, dtype=int)
        return CURVE_SCALE * curve_point(name, t, branch)
    return sample


RECIPES: Dict[str, Tuple[Callable[[np.random.Generator, int], np.ndarray], int]] = {
    "alphabet": (_alphabet, 2),
    "checkerboard": (_checkerboard, 2),
    "pinwheel": (_pinwheel, 2),
    "spiral": (_spiral, 2),
    "bent_lissajous": (_curve_sampler("bent_lissajous"), 3),
    "interlocked_circles": (_curve_sampler("interlocked_circles"), 3),
    "knotted": (_curve_sampler("knotted"), 3),
    "twisted_eight": (_curve_sampler("twisted_eight"), 3),
}

DATASET_NAMES = tuple(sorted(RECIPES))


def dataset_dimension(name: str) -> int:
    if name not in RECIPES:
        raise ArgumentError(f"Unknown dataset '{name}' (expected one of {', '.join(DATASET_NAMES)})")
    return RECIPES[name][1]


def generate(name: str, total_count: int, seed: int, protocol_noise: bool = True) -> np.ndarray:
    """Raw total_count x d sample of a named dataset."""
    dataset_dimension(name)
    if total_count < 1:
        raise ArgumentError(f"Need a positive sample count, got {total_count}")
    rng = np.random.Generator(np.random.Philox(seed))
    points = RECIPES[name][0](rng, total_count)
    if protocol_noise:
        points = points + rng.normal(0.0, PROTOCOL_NOISE, size=points.shape)
    return points


class DatasetGenerator:
    """Seeded dataset source that reports what it produced."""

    def __init__(self, seed: int, protocol_noise: bool = True, emit_event_callback=None):
        self.seed = seed
        self.protocol_noise = protocol_noise
        self.emit_event = emit_event_callback or default_event_handler

    def generate(self, name: str, total_count: int) -> np.ndarray:
        points = generate(name, total_count, self.seed, self.protocol_noise)
        self.emit_event("generator", EventType.PHASE_COMPLETE,
                        f"Generated {total_count} {name} points (seed {self.seed})", "low",
                        {"dataset": name, "count": total_count, "seed": self.seed,
                         "dimension": points.shape[1]})
        return points
