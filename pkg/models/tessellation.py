"""
Geometric value types: Voronoi tessellations, half-spaces and boxes.

Cells are closed (a.x <= b), so neighbouring cells share their faces.
Every tie is settled in favour of the lower cell index.
"""

import sys
import os
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.errors import ArgumentError, GeometryError

MIN_CENTROID_DISTANCE = 1e-9


class CellLabel(Enum):
    """Relation between a box and one Voronoi cell."""
    INSIDE = "inside"
    OUTSIDE = "outside"
    BOUNDARY = "boundary"


@dataclass(frozen=True)
class HalfSpace:
    """The closed half-space {x : normal . x <= offset}."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        if not np.any(self.normal != 0.0):
            raise GeometryError("Half-space normal must be non-zero")


@dataclass(frozen=True)
class Margin:
    """Nearest cell of a point and its squared-distance gap to the runner-up."""

    nearest_cell: int
    gamma: float


class Box:
    """
    Axis-aligned box prod_i [lower_i, upper_i]; bounds may be infinite.

    Any box with lower_i > upper_i in some dimension is canonicalized to the
    empty box of its dimension, so all empty boxes compare equal.
    """

    __slots__ = ("lower", "upper", "is_empty")

    def __init__(self, lower: Sequence[float], upper: Sequence[float]):
        lower = np.array(lower, dtype=float).reshape(-1)
        upper = np.array(upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape:
            raise ArgumentError(
                f"Box bounds have mismatched dimensions {lower.shape[0]} and {upper.shape[0]}")
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)):
            raise ArgumentError("Box bounds must not be NaN")
        self.is_empty = bool(np.any(lower > upper))
        if self.is_empty:
            lower = np.full(lower.shape, np.inf)
            upper = np.full(upper.shape, -np.inf)
        self.lower = lower
        self.upper = upper

    # === Constructors ===

    @classmethod
    def empty(cls, dim: int) -> "Box":
        return cls(np.full(dim, np.inf), np.full(dim, -np.inf))

    @classmethod
    def unbounded(cls, dim: int) -> "Box":
        return cls(np.full(dim, -np.inf), np.full(dim, np.inf))

    @classmethod
    def from_dict(cls, data: Dict) -> "Box":
        if data.get("empty"):
            return cls.empty(int(data["dim"]))
        return cls(data["lower"], data["upper"])

    # === Properties ===

    @property
    def dim(self) -> int:
        return int(self.lower.shape[0])

    @property
    def widths(self) -> np.ndarray:
        if self.is_empty:
            return np.zeros(self.dim)
        return self.upper - self.lower

    def is_bounded(self, dims: Optional[Sequence[int]] = None) -> bool:
        if self.is_empty:
            return True
        idx = slice(None) if dims is None else list(dims)
        return bool(np.all(np.isfinite(self.lower[idx])) and np.all(np.isfinite(self.upper[idx])))

    def volume(self, dims: Optional[Sequence[int]] = None) -> float:
        if self.is_empty:
            return 0.0
        idx = slice(None) if dims is None else list(dims)
        return float(np.prod(self.upper[idx] - self.lower[idx]))

    def longest_dimension(self, dims: Optional[Sequence[int]] = None) -> int:
        """Widest dimension among ``dims``; lowest index on ties."""
        candidates = list(range(self.dim)) if dims is None else list(dims)
        widths = self.widths
        best = candidates[0]
        for d in candidates[1:]:
            if widths[d] > widths[best]:
                best = d
        return best

    # === Set operations ===

    def intersect(self, other: "Box") -> "Box":
        if self.dim != other.dim:
            raise ArgumentError(f"Cannot intersect boxes of dimension {self.dim} and {other.dim}")
        if self.is_empty or other.is_empty:
            return Box.empty(self.dim)
        return Box(np.maximum(self.lower, other.lower), np.minimum(self.upper, other.upper))

    def contains_box(self, other: "Box", dims: Optional[Sequence[int]] = None) -> bool:
        if other.is_empty:
            return True
        if self.is_empty:
            return False
        idx = slice(None) if dims is None else list(dims)
        return bool(np.all(self.lower[idx] <= other.lower[idx])
                    and np.all(other.upper[idx] <= self.upper[idx]))

    def contains_point(self, x, closed_upper: bool = True) -> bool:
        if self.is_empty:
            return False
        x = np.asarray(x, dtype=float)
        if closed_upper:
            return bool(np.all(self.lower <= x) and np.all(x <= self.upper))
        return bool(np.all(self.lower <= x) and np.all(x < self.upper))

    def replace_dim(self, dim: int, lower: float, upper: float) -> "Box":
        lo = self.lower.copy()
        hi = self.upper.copy()
        lo[dim] = lower
        hi[dim] = upper
        return Box(lo, hi)

    def slice(self, dims: Sequence[int]) -> "Box":
        dims = list(dims)
        if self.is_empty:
            return Box.empty(len(dims))
        return Box(self.lower[dims], self.upper[dims])

    def embed(self, dims: Sequence[int], total_dim: int) -> "Box":
        """Place this box on ``dims`` of a ``total_dim`` box, unbounded elsewhere."""
        if self.is_empty:
            return Box.empty(total_dim)
        lo = np.full(total_dim, -np.inf)
        hi = np.full(total_dim, np.inf)
        lo[list(dims)] = self.lower
        hi[list(dims)] = self.upper
        return Box(lo, hi)

    def sample_uniform(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if self.is_empty or not self.is_bounded():
            raise ArgumentError("Can only sample from a bounded non-empty box")
        return self.lower + rng.random((count, self.dim)) * (self.upper - self.lower)

    def key(self, dims: Sequence[int]) -> Tuple[bytes, bytes]:
        idx = list(dims)
        return self.lower[idx].tobytes(), self.upper[idx].tobytes()

    def to_dict(self) -> Dict:
        if self.is_empty:
            return {"empty": True, "dim": self.dim}
        return {"lower": [float(v) for v in self.lower], "upper": [float(v) for v in self.upper]}

    def __eq__(self, other) -> bool:
        if not isinstance(other, Box) or other.dim != self.dim:
            return False
        if self.is_empty or other.is_empty:
            return self.is_empty and other.is_empty
        return bool(np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper))

    def __hash__(self):
        return hash((self.lower.tobytes(), self.upper.tobytes()))

    def __repr__(self):
        if self.is_empty:
            return f"Box(empty, dim={self.dim})"
        parts = ", ".join(f"[{lo:g}, {hi:g}]" for lo, hi in zip(self.lower, self.upper))
        return f"Box({parts})"


def closest_centroid_pair(centroids: np.ndarray) -> Optional[Tuple[int, int, float]]:
    """Indices ``i < j`` and distance of the closest pair of rows, or None for a single row."""
    k = centroids.shape[0]
    if k < 2:
        return None
    diff = centroids[:, None, :] - centroids[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    dist[np.arange(k), np.arange(k)] = np.inf
    i, j = np.unravel_index(int(np.argmin(dist)), dist.shape)
    return int(min(i, j)), int(max(i, j)), float(dist[i, j])


class Tessellation:
    """
    Voronoi tessellation of R^d induced by K centroids.

    Half-space lists are derived on first use and cached per cell.
    """

    def __init__(self, centroids):
        centroids = np.array(centroids, dtype=float)
        if centroids.ndim == 1:
            centroids = centroids.reshape(-1, 1)
        if centroids.ndim != 2 or centroids.shape[0] < 1:
            raise ArgumentError(f"Centroids must be a non-empty K x d matrix, got shape {centroids.shape}")
        if not np.all(np.isfinite(centroids)):
            raise GeometryError("Centroids must be finite")
        closest = closest_centroid_pair(centroids)
        if closest is not None and closest[2] <= MIN_CENTROID_DISTANCE:
            raise GeometryError(f"Centroids {closest[0]} and {closest[1]} coincide (distance {closest[2]:.3e})")
        self.centroids = centroids
        self._halfspaces: Dict[int, List[HalfSpace]] = {}
        self._stacked: Optional[Tuple[np.ndarray, np.ndarray]] = None

    @property
    def num_cells(self) -> int:
        return int(self.centroids.shape[0])

    @property
    def dim(self) -> int:
        return int(self.centroids.shape[1])

    def halfspaces(self, k: int) -> List[HalfSpace]:
        """Cell k as K-1 closed half-spaces (c_j - c_k).x <= (|c_j|^2 - |c_k|^2)/2."""
        if not 0 <= k < self.num_cells:
            raise ArgumentError(f"Cell index {k} out of range for {self.num_cells} cells")
        if k not in self._halfspaces:
            ck = self.centroids[k]
            sq_k = float(np.dot(ck, ck))
            spaces = []
            for j in range(self.num_cells):
                if j == k:
                    continue
                cj = self.centroids[j]
                spaces.append(HalfSpace(normal=cj - ck, offset=0.5 * (float(np.dot(cj, cj)) - sq_k)))
            self._halfspaces[k] = spaces
        return self._halfspaces[k]

    def stacked_halfspaces(self) -> Tuple[np.ndarray, np.ndarray]:
        """Normals (K, K-1, d) and offsets (K, K-1) for all cells at once."""
        if self._stacked is None:
            k, d = self.centroids.shape
            normals = np.zeros((k, max(k - 1, 0), d))
            offsets = np.zeros((k, max(k - 1, 0)))
            for cell in range(k):
                for row, space in enumerate(self.halfspaces(cell)):
                    normals[cell, row] = space.normal
                    offsets[cell, row] = space.offset
            self._stacked = (normals, offsets)
        return self._stacked
