"""
Labeled box partitions of a gated node's domain.

The partition starts as the single box Omega_S and grows by bisection.
Every box carries one label per Voronoi cell. Per-cell running sums of
expert integrals over Inside boxes (lower bound) and non-Outside boxes
(upper bound) are kept up to date as boxes are split.
"""

import math
import sys
import os
from typing import Dict, List, Optional

import numpy as np

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.tessellation import Box, CellLabel, Tessellation
from geometry.cells import (LABEL_BOUNDARY, LABEL_CODES, LABEL_INSIDE, LABEL_OUTSIDE,
                            bisect_box, classify_box_all_cells)


def counts_toward_lower(box: Box, domain: Box, evidence: Dict[int, float], scope: List[int]) -> bool:
    """
    Whether an observed point in ``box`` is credited to it in lower sums.
    A value on an interior upper face belongs to the neighbouring box, so
    the boxes of a partition never credit the same point twice.
    """
    for var in scope:
        if var in evidence:
            value = evidence[var]
            if value == box.upper[var] and box.upper[var] < domain.upper[var]:
                return False
    return True


class LabeledPartition:
    """
    Disjoint boxes covering the domain of one VT node, labeled per cell.

    Boxes are D-dimensional with unbounded non-scope dimensions; only the
    scope dimensions are ever split.
    """

    def __init__(self, node_id: int, tess: Tessellation, scope: List[int], domain: Box):
        self.node_id = node_id
        self.tess = tess
        self.scope = list(scope)
        self.domain = domain
        self.boxes: Dict[int, Box] = {}
        self.labels: Dict[int, np.ndarray] = {}
        self.box_lo: Dict[int, np.ndarray] = {}
        self.box_hi: Dict[int, np.ndarray] = {}
        self.depth: Dict[int, int] = {}
        self.inside_lo = np.zeros(tess.num_cells)
        self.nonoutside_hi = np.zeros(tess.num_cells)
        self.sums_ready = False
        self._next_id = 0

    @property
    def num_cells(self) -> int:
        return self.tess.num_cells

    def classify(self, box: Box) -> np.ndarray:
        return classify_box_all_cells(self.tess, box.slice(self.scope))

    def add_box(self, box: Box, depth: int = 0) -> int:
        box_id = self._next_id
        self._next_id += 1
        self.boxes[box_id] = box
        self.labels[box_id] = self.classify(box)
        self.depth[box_id] = depth
        return box_id

    def set_integrals(self, box_id: int, lo: np.ndarray, hi: np.ndarray, credit_lower: bool = True):
        """Attach per-cell expert integrals of a box and add them to the running sums."""
        labels = self.labels[box_id]
        lo = np.where((labels == LABEL_INSIDE) & credit_lower, lo, 0.0)
        hi = np.where(labels != LABEL_OUTSIDE, hi, 0.0)
        self.box_lo[box_id] = lo
        self.box_hi[box_id] = hi
        self.inside_lo += lo
        self.nonoutside_hi += hi

    def remove_box(self, box_id: int):
        if box_id in self.box_lo:
            self.inside_lo -= self.box_lo.pop(box_id)
            self.nonoutside_hi -= self.box_hi.pop(box_id)
        del self.boxes[box_id]
        del self.labels[box_id]
        del self.depth[box_id]

    def split(self, box_id: int) -> List[int]:
        """Bisect a box along its longest scope dimension; returns the child ids."""
        box = self.boxes[box_id]
        dim = box.longest_dimension(self.scope)
        first, second = bisect_box(box, dim)
        depth = self.depth[box_id] + 1
        self.remove_box(box_id)
        return [self.add_box(first, depth), self.add_box(second, depth)]

    def resync_sums(self):
        """Recompute the running sums with compensated summation."""
        k = self.num_cells
        lo_rows = list(self.box_lo.values())
        hi_rows = list(self.box_hi.values())
        self.inside_lo = np.array([math.fsum(row[c] for row in lo_rows) for c in range(k)])
        self.nonoutside_hi = np.array([math.fsum(row[c] for row in hi_rows) for c in range(k)])

    # === Queries ===

    def boundary_ids(self) -> List[int]:
        return [bid for bid, labels in self.labels.items() if np.any(labels == LABEL_BOUNDARY)]

    def boundary_cells(self, box_id: int) -> np.ndarray:
        return np.flatnonzero(self.labels[box_id] == LABEL_BOUNDARY)

    def label(self, box_id: int, cell: int) -> CellLabel:
        return LABEL_CODES[int(self.labels[box_id][cell])]

    def __len__(self) -> int:
        return len(self.boxes)

    def total_volume(self) -> float:
        return math.fsum(box.volume(self.scope) for box in self.boxes.values())

    def check_integrity(self, rel_tol: float = 1e-9) -> Optional[str]:
        """None when boxes are pairwise interior-disjoint and cover the domain, else a message."""
        domain_volume = self.domain.volume(self.scope)
        total = self.total_volume()
        if abs(total - domain_volume) > rel_tol * domain_volume:
            return f"coverage: boxes cover volume {total}, domain has {domain_volume}"
        boxes = list(self.boxes.items())
        lowers = np.array([b.lower[self.scope] for _, b in boxes])
        uppers = np.array([b.upper[self.scope] for _, b in boxes])
        for i, (bid, box) in enumerate(boxes):
            if not self.domain.contains_box(box, self.scope):
                return f"box {bid} leaves the domain"
            overlap = np.minimum(uppers[i], uppers) - np.maximum(lowers[i], lowers)
            interior = np.all(overlap > 0.0, axis=1)
            interior[i] = False
            if np.any(interior):
                return f"box {bid} overlaps another box"
        for bid, box in boxes:
            if not np.array_equal(self.labels[bid], self.classify(box)):
                return f"box {bid} has stale labels"
        return None
