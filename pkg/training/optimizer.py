"""
Adam over a flat parameter vector.
"""

import sys
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.errors import ArgumentError, ConfigError


@dataclass
class AdamConfig:
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate < 0.0:
            raise ConfigError(f"Learning rate must be non-negative, got {self.learning_rate}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError(f"Adam betas must lie in [0, 1), got ({self.beta1}, {self.beta2})")
        if not self.eps > 0.0:
            raise ConfigError("Adam eps must be positive")


class Adam:
    """Bias-corrected first and second moment estimates, one entry per parameter."""

    def __init__(self, size: int, config: Optional[AdamConfig] = None):
        self.config = config or AdamConfig()
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """Return the updated parameter vector; ``params`` is not modified."""
        if params.shape != self.m.shape or grad.shape != self.m.shape:
            raise ArgumentError(
                f"Adam expects vectors of shape {self.m.shape}, got {params.shape} and {grad.shape}")
        cfg = self.config
        self.t += 1
        self.m = cfg.beta1 * self.m + (1.0 - cfg.beta1) * grad
        self.v = cfg.beta2 * self.v + (1.0 - cfg.beta2) * grad * grad
        m_hat = self.m / (1.0 - cfg.beta1 ** self.t)
        v_hat = self.v / (1.0 - cfg.beta2 ** self.t)
        return params - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
