"""
Univariate Gaussian leaves.

A leaf is the only node that touches data directly. Every leaf family
has to provide the same contract: log-density, density, the mass of an
interval (closed form through the CDF) and the parameter gradients of its
log-density. Only the Gaussian family is implemented.
"""

import math
import sys
import os
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.errors import ArgumentError

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class GaussianLeaf:
    """Normal density N(mean, stddev^2) over a single variable."""

    var: int
    mean: float
    stddev: float

    def __post_init__(self):
        if self.var < 0:
            raise ArgumentError(f"Leaf variable index must be non-negative, got {self.var}")
        if not (self.stddev > 0.0) or not math.isfinite(self.stddev):
            raise ArgumentError(f"Leaf stddev must be positive and finite, got {self.stddev}")
        if not math.isfinite(self.mean):
            raise ArgumentError(f"Leaf mean must be finite, got {self.mean}")

    @property
    def log_stddev(self) -> float:
        return math.log(self.stddev)

    def log_density(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.stddev
        return -0.5 * z * z - LOG_SQRT_2PI - math.log(self.stddev)

    def density(self, x):
        return np.exp(self.log_density(x))

    def interval_mass(self, a: float, b: float) -> float:
        """
        Probability mass of [a, b]; infinite endpoints are allowed.

        When both standardized endpoints are positive the upper tails are
        subtracted instead of the CDFs, which keeps far-tail intervals from
        cancelling to zero.
        """
        if a > b:
            raise ArgumentError(f"Interval lower end {a} exceeds upper end {b}")
        if a == b:
            return 0.0
        za = (a - self.mean) / self.stddev
        zb = (b - self.mean) / self.stddev
        if za > 0.0:
            mass = float(ndtr(-za) - ndtr(-zb))
        else:
            mass = float(ndtr(zb) - ndtr(za))
        return min(max(mass, 0.0), 1.0)

    def grad_log_density(self, x):
        """(d/d mean, d/d log-stddev) of the log-density at x."""
        x = np.asarray(x, dtype=float)
        var = self.stddev * self.stddev
        diff = x - self.mean
        return diff / var, diff * diff / var - 1.0


def leaf_interval_mass(leaf: GaussianLeaf, a: float, b: float) -> float:
    return leaf.interval_mass(a, b)
