"""
Certified interval values and integration domains.
"""

import math
import sys
import os
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.errors import ArgumentError, ConfigError
from models.tessellation import Box

# lo may exceed hi by accumulated rounding when both come from exact paths.
ROUNDING_SLACK = 1e-12


@dataclass(frozen=True)
class BoundInterval:
    """Certified enclosure lo <= value <= hi of a non-negative quantity."""

    lo: float
    hi: float

    def __post_init__(self):
        lo = float(self.lo)
        hi = float(self.hi)
        if math.isnan(lo) or math.isnan(hi):
            raise ArgumentError("Bound interval endpoints must not be NaN")
        if lo > hi:
            if lo - hi > ROUNDING_SLACK * max(1.0, abs(hi)):
                raise ArgumentError(f"Bound interval has lo {lo} > hi {hi}")
            hi = lo
        object.__setattr__(self, "lo", max(lo, 0.0))
        object.__setattr__(self, "hi", max(hi, 0.0))

    @classmethod
    def point(cls, value: float) -> "BoundInterval":
        return cls(value, value)

    @classmethod
    def zero(cls) -> "BoundInterval":
        return cls(0.0, 0.0)

    @property
    def gap(self) -> float:
        return self.hi - self.lo

    @property
    def is_exact(self) -> bool:
        return self.lo == self.hi

    def contains(self, value: float, rel_tol: float = 0.0, abs_tol: float = 0.0) -> bool:
        slack = abs_tol + rel_tol * abs(value)
        return self.lo - slack <= value <= self.hi + slack

    def __add__(self, other: "BoundInterval") -> "BoundInterval":
        return BoundInterval(self.lo + other.lo, self.hi + other.hi)

    def __mul__(self, other: "BoundInterval") -> "BoundInterval":
        return BoundInterval(self.lo * other.lo, self.hi * other.hi)

    def scale(self, factor: float) -> "BoundInterval":
        return BoundInterval(self.lo * factor, self.hi * factor)

    def log_bounds(self):
        """(log lo, log hi); log 0 is -inf."""
        lo = math.log(self.lo) if self.lo > 0.0 else -math.inf
        hi = math.log(self.hi) if self.hi > 0.0 else -math.inf
        return lo, hi

    def to_dict(self) -> Dict[str, float]:
        return {"lo": self.lo, "hi": self.hi, "gap": self.gap}

    def __str__(self):
        return f"[{self.lo:.6g}, {self.hi:.6g}]"


@dataclass
class DomainSpec:
    """
    Bounded integration domain Omega, fixed by hand or derived from data as
    per-variable min/max padded by ``padding``.
    """

    box: Box
    provenance: str = "fixed"
    padding: Optional[float] = None

    def __post_init__(self):
        if self.provenance not in ("fixed", "data"):
            raise ConfigError(f"Unknown domain provenance '{self.provenance}'")
        if self.box.is_empty:
            raise ConfigError("Domain must not be empty")
        if not self.box.is_bounded():
            raise ConfigError("Domain must be bounded in every dimension")
        if np.any(self.box.lower >= self.box.upper):
            raise ConfigError("Domain needs lower < upper in every dimension")

    @classmethod
    def fixed(cls, lower, upper) -> "DomainSpec":
        return cls(Box(lower, upper), "fixed")

    @classmethod
    def from_data(cls, data: np.ndarray, padding: float = 0.5) -> "DomainSpec":
        data = np.asarray(data, dtype=float)
        if data.ndim != 2 or data.shape[0] == 0:
            raise ArgumentError("Need a non-empty N x D data matrix to derive a domain")
        if padding < 0.0:
            raise ConfigError("Domain padding must be non-negative")
        return cls(Box(data.min(axis=0) - padding, data.max(axis=0) + padding), "data", padding)

    @property
    def dim(self) -> int:
        return self.box.dim

    def to_dict(self) -> Dict:
        out = {"provenance": self.provenance, **self.box.to_dict()}
        if self.padding is not None:
            out["padding"] = self.padding
        return out

    @classmethod
    def from_dict(cls, data: Dict) -> "DomainSpec":
        return cls(Box(data["lower"], data["upper"]), data.get("provenance", "fixed"),
                   data.get("padding"))


def as_domain_box(domain, num_vars: int) -> Optional[Box]:
    """Accept a DomainSpec, a Box or None."""
    if domain is None:
        return None
    box = domain.box if isinstance(domain, DomainSpec) else domain
    if box.dim != num_vars:
        raise ArgumentError(f"Domain has dimension {box.dim}, circuit has {num_vars} variables")
    return box
