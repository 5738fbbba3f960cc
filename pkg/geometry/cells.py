"""
Voronoi cell geometry: half-spaces, point location, box classification,
inner/outer boxes, univariate interval cells and box bisection.
"""

import math
import sys
import os
from typing import List, Optional, Sequence, Tuple

import numpy as np

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.errors import ArgumentError, LPSolverError
from models.tessellation import Box, CellLabel, HalfSpace, Margin, Tessellation
from geometry.lp_solver import lp_extremum

# Outer-box bounds are pushed outward by this relative amount to absorb
# rounding in the simplex solution.
OUTER_BOX_SLACK = 1e-9

Interval = Tuple[float, float]


def cell_halfspaces(tess: Tessellation, k: int) -> List[HalfSpace]:
    """Cell k as K-1 closed half-spaces; empty for a single-cell tessellation."""
    return list(tess.halfspaces(k))


def cell_mask(points: np.ndarray, centroids: np.ndarray, k: int) -> np.ndarray:
    """Rows of ``points`` in closed cell k: (c_j - c_k).x <= (|c_j|^2 - |c_k|^2)/2 for every j != k."""
    ck = centroids[k]
    sq_k = float(np.dot(ck, ck))
    inside = np.ones(points.shape[0], dtype=bool)
    for j in range(centroids.shape[0]):
        if j == k:
            continue
        cj = centroids[j]
        inside &= points @ (cj - ck) <= 0.5 * (float(np.dot(cj, cj)) - sq_k)
    return inside


def cell_contains(tess: Tessellation, u, k: int) -> bool:
    """Closed-cell membership of u in cell k."""
    if not 0 <= k < tess.num_cells:
        raise ArgumentError(f"Cell index {k} out of range for {tess.num_cells} cells")
    u = np.asarray(u, dtype=float).reshape(1, -1)
    return bool(cell_mask(u, tess.centroids, k)[0])


def squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """(N, K) squared distances; rows of ``points`` against rows of ``centroids``."""
    diff = points[:, None, :] - centroids[None, :, :]
    return np.sum(diff * diff, axis=2)


def nearest_cells(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """
    Hard-gate cell per row: the lowest-indexed closed cell containing it.

    Uses the same half-space test as ``cell_contains``, so a point on a
    shared face goes to the lower index. Rows that rounding leaves outside
    every closed cell take the nearest centroid.
    """
    points = np.asarray(points, dtype=float)
    centroids = np.asarray(centroids, dtype=float)
    cells = np.full(points.shape[0], -1, dtype=int)
    for k in range(centroids.shape[0]):
        cells[(cells < 0) & cell_mask(points, centroids, k)] = k
    stray = cells < 0
    if np.any(stray):
        cells[stray] = np.argmin(squared_distances(points[stray], centroids), axis=1)
    return cells


def nearest_centroid(tess: Tessellation, u) -> Margin:
    u = np.asarray(u, dtype=float).reshape(1, -1)
    if u.shape[1] != tess.dim:
        raise ArgumentError(f"Point has dimension {u.shape[1]}, tessellation has {tess.dim}")
    k = int(nearest_cells(u, tess.centroids)[0])
    if tess.num_cells == 1:
        return Margin(nearest_cell=0, gamma=math.inf)
    sq = squared_distances(u, tess.centroids)[0]
    others = np.delete(sq, k)
    return Margin(nearest_cell=k, gamma=max(0.0, float(others.min() - sq[k])))


def _linear_extrema(normal: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> Tuple[float, float]:
    """min and max of normal.x over a box; zero coefficients ignore infinite bounds."""
    active = normal != 0.0
    a = normal[active]
    lo = lower[active]
    hi = upper[active]
    at_hi = a * hi
    at_lo = a * lo
    return float(np.sum(np.minimum(at_lo, at_hi))), float(np.sum(np.maximum(at_lo, at_hi)))


def classify_box(box: Box, halfspaces: Sequence[HalfSpace]) -> CellLabel:
    """
    Inside when every half-space maximum over the box satisfies its bound,
    Outside when some half-space minimum violates it, Boundary otherwise.
    """
    if box.is_empty:
        return CellLabel.OUTSIDE
    inside = True
    for space in halfspaces:
        lo, hi = _linear_extrema(space.normal, box.lower, box.upper)
        if lo > space.offset:
            return CellLabel.OUTSIDE
        if not hi <= space.offset:
            inside = False
    return CellLabel.INSIDE if inside else CellLabel.BOUNDARY


LABEL_INSIDE = 0
LABEL_OUTSIDE = 1
LABEL_BOUNDARY = 2
LABEL_CODES = {LABEL_INSIDE: CellLabel.INSIDE, LABEL_OUTSIDE: CellLabel.OUTSIDE,
               LABEL_BOUNDARY: CellLabel.BOUNDARY}


def classify_box_all_cells(tess: Tessellation, box: Box) -> np.ndarray:
    """
    Label codes (0 inside, 1 outside, 2 boundary) of a bounded box against
    every cell at once.
    """
    k = tess.num_cells
    if box.is_empty:
        return np.full(k, LABEL_OUTSIDE, dtype=np.int8)
    if k == 1:
        return np.full(1, LABEL_INSIDE, dtype=np.int8)
    normals, offsets = tess.stacked_halfspaces()
    pos = np.maximum(normals, 0.0)
    neg = np.minimum(normals, 0.0)
    upper_vals = pos @ box.upper + neg @ box.lower
    lower_vals = pos @ box.lower + neg @ box.upper
    labels = np.full(k, LABEL_BOUNDARY, dtype=np.int8)
    labels[np.all(upper_vals <= offsets, axis=1)] = LABEL_INSIDE
    labels[np.any(lower_vals > offsets, axis=1)] = LABEL_OUTSIDE
    return labels


def inner_box(tess: Tessellation, k: int, domain: Box) -> Box:
    """
    Cube of half-width delta/(2 sqrt d) around c_k, clipped to the domain,
    where delta is the distance from c_k to its nearest other centroid.
    Every point of the cube is within delta/2 of c_k, hence in cell k.
    """
    if tess.num_cells == 1:
        return Box(domain.lower, domain.upper)
    ck = tess.centroids[k]
    others = np.delete(tess.centroids, k, axis=0)
    delta = float(np.sqrt(np.min(np.sum((others - ck) ** 2, axis=1))))
    radius = delta / (2.0 * math.sqrt(tess.dim))
    return Box(ck - radius, ck + radius).intersect(domain)


def outer_box(tess: Tessellation, k: int, domain: Box) -> Box:
    """
    Tightest axis-aligned box around cell k clipped to the domain, from 2d
    linear programs. Empty when the clipped cell is empty; the domain itself
    when the solver fails.
    """
    if not domain.is_bounded():
        raise ArgumentError("outer_box requires a bounded domain")
    if domain.is_empty:
        return Box.empty(domain.dim)
    if tess.num_cells == 1:
        return Box(domain.lower, domain.upper)
    spaces = tess.halfspaces(k)
    lower = np.empty(tess.dim)
    upper = np.empty(tess.dim)
    try:
        for i in range(tess.dim):
            low = lp_extremum(spaces, domain, i, maximize=False)
            if not low.is_feasible:
                return Box.empty(domain.dim)
            high = lp_extremum(spaces, domain, i, maximize=True)
            if not high.is_feasible:
                return Box.empty(domain.dim)
            lower[i] = low.value - OUTER_BOX_SLACK * (1.0 + abs(low.value))
            upper[i] = high.value + OUTER_BOX_SLACK * (1.0 + abs(high.value))
    except LPSolverError:
        return Box(domain.lower, domain.upper)
    return Box(lower, upper).intersect(domain)


def univariate_cells(sorted_centroids: Sequence[float]) -> List[Interval]:
    """
    Cells of a 1-D tessellation: (-inf, m1], (m1, m2], ..., (m_{K-1}, inf)
    with m_i the midpoints of consecutive centroids.
    """
    c = np.asarray(sorted_centroids, dtype=float).reshape(-1)
    if c.size == 0:
        raise ArgumentError("Need at least one centroid")
    if np.any(np.diff(c) <= 0.0):
        raise ArgumentError("Univariate centroids must be strictly increasing")
    mids = 0.5 * (c[:-1] + c[1:])
    edges = np.concatenate([[-np.inf], mids, [np.inf]])
    return [(float(edges[i]), float(edges[i + 1])) for i in range(c.size)]


def univariate_cells_any_order(centroids: Sequence[float]) -> List[Interval]:
    """Cells indexed like ``centroids``, which need not be sorted."""
    c = np.asarray(centroids, dtype=float).reshape(-1)
    order = np.argsort(c, kind="stable")
    sorted_cells = univariate_cells(c[order])
    cells: List[Optional[Interval]] = [None] * c.size
    for rank, idx in enumerate(order):
        cells[int(idx)] = sorted_cells[rank]
    return cells


def univariate_cell_of(centroids: Sequence[float], values) -> np.ndarray:
    """
    Cell index (in the order of ``centroids``) of each value. A value on a
    midpoint belongs to the cell of the smaller centroid.
    """
    c = np.asarray(centroids, dtype=float).reshape(-1)
    order = np.argsort(c, kind="stable")
    sorted_c = c[order]
    if np.any(np.diff(sorted_c) <= 0.0):
        raise ArgumentError("Univariate centroids must be distinct")
    mids = 0.5 * (sorted_c[:-1] + sorted_c[1:])
    ranks = np.searchsorted(mids, np.asarray(values, dtype=float), side="left")
    return order[ranks]


def bisect_box(box: Box, dim: int) -> Tuple[Box, Box]:
    """Split at the midpoint of ``dim``; the shared face is [mid] in both halves."""
    if box.is_empty:
        raise ArgumentError("Cannot bisect an empty box")
    if not 0 <= dim < box.dim:
        raise ArgumentError(f"Split dimension {dim} out of range for box of dimension {box.dim}")
    lo = float(box.lower[dim])
    hi = float(box.upper[dim])
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ArgumentError(f"Cannot bisect unbounded dimension {dim}")
    if not hi > lo:
        raise ArgumentError(f"Cannot bisect degenerate dimension {dim}")
    mid = 0.5 * (lo + hi)
    return box.replace_dim(dim, lo, mid), box.replace_dim(dim, mid, hi)
