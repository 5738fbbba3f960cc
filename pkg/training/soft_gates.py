"""
Soft Voronoi gates and the inverse-temperature schedule.

w_k(u; alpha) = exp(-alpha |u - c_k|^2) / sum_j exp(-alpha |u - c_j|^2)

Squared distances are shifted by their row minimum before exponentiating,
so no entry overflows and the nearest centroid always gets exp(0).
"""

import sys
import os
from dataclasses import dataclass

import numpy as np

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.errors import ArgumentError, ConfigError


@dataclass
class SoftGateConfig:
    """Linear inverse-temperature schedule alpha_start -> alpha_end over the epochs."""

    alpha_start: float = 1.0
    alpha_end: float = 50.0
    schedule: str = "linear"

    def __post_init__(self):
        if not (self.alpha_start > 0.0 and self.alpha_end > 0.0):
            raise ConfigError("Soft gate temperatures must be positive")
        if self.alpha_start > self.alpha_end:
            raise ConfigError(
                f"alpha_start ({self.alpha_start}) must not exceed alpha_end ({self.alpha_end})")
        if self.schedule != "linear":
            raise ConfigError(f"Unknown annealing schedule '{self.schedule}'")


def _check_alpha(alpha: float):
    if not alpha > 0.0:
        raise ArgumentError(f"Inverse temperature must be positive, got {alpha}")


def log_soft_weights(points: np.ndarray, centroids: np.ndarray, alpha: float) -> np.ndarray:
    """(N, K) log gate weights for N points of dimension d against K centroids."""
    _check_alpha(alpha)
    points = np.asarray(points, dtype=float)
    centroids = np.asarray(centroids, dtype=float)
    diff = points[:, None, :] - centroids[None, :, :]
    sq = np.sum(diff * diff, axis=2)
    scores = -alpha * (sq - sq.min(axis=1, keepdims=True))
    return scores - np.log(np.sum(np.exp(scores), axis=1, keepdims=True))


def soft_weights(u, centroids, alpha: float) -> np.ndarray:
    """Gate weights of a single point, a vector on the simplex."""
    centroids = np.asarray(centroids, dtype=float)
    if centroids.ndim == 1:
        centroids = centroids.reshape(-1, 1)
    u = np.asarray(u, dtype=float).reshape(1, -1)
    return np.exp(log_soft_weights(u, centroids, alpha)[0])


def log_univariate_soft_weights(values: np.ndarray, centroids: np.ndarray, alpha: float) -> np.ndarray:
    """(N, K) log gate weights of scalar values against univariate centroids."""
    return log_soft_weights(np.asarray(values, dtype=float).reshape(-1, 1),
                            np.asarray(centroids, dtype=float).reshape(-1, 1), alpha)


def anneal_alpha(epoch: int, total_epochs: int, config: SoftGateConfig) -> float:
    """alpha_start + (alpha_end - alpha_start) * epoch / (total_epochs - 1)."""
    if total_epochs < 1 or not 0 <= epoch < total_epochs:
        raise ArgumentError(f"Epoch {epoch} outside 0..{total_epochs - 1}")
    if total_epochs == 1:
        return float(config.alpha_start)
    frac = epoch / (total_epochs - 1)
    return float(config.alpha_start + (config.alpha_end - config.alpha_start) * frac)
