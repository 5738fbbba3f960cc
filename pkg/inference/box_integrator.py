"""
Box-restricted integration of circuits with certified intervals.

``BoxIntegrator.integrate(node, box)`` returns an interval containing
the integral of the node's function over ``box`` (a D-dimensional box; a
node only reads its own scope dimensions). Observed variables are not
integrated: their leaves contribute the density at the observed value
when the value lies in the box.

  leaf       exact interval mass (or density at evidence)
  product    interval product of the children over the same box
  sum        weighted interval sum
  HFV sum    sum over joint cells of the product of per-block integrals,
             each block expert restricted to its interval cell (exact)
  VT sum     per cell, the best of the inner/outer box bounds and the
             labeled partition bounds, plus a tail term for the part of
             the box outside the domain

Results are memoized per (node, box). Entries for nodes whose subtree
holds a VT gate are dropped by ``invalidate()`` after a partition changes.
"""

import sys
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.circuit import Circuit, HFVSumNode, ProductNode, SumNode, VTSumNode, node_children
from models.errors import ArgumentError, ConfigError
from models.leaves import GaussianLeaf
from models.tessellation import Box
from geometry.cells import (LABEL_INSIDE, LABEL_OUTSIDE, inner_box, nearest_cells, outer_box,
                            univariate_cell_of, univariate_cells_any_order)
from inference.bounds import BoundInterval, as_domain_box
from inference.partition import LabeledPartition, counts_toward_lower


@dataclass
class CellApproximation:
    """Inner and outer boxes per cell of one VT node, plus an optional partition."""

    inner: List[Box]
    outer: List[Box]
    partition: Optional[LabeledPartition] = None


def vt_cells_are_boxes(node: VTSumNode) -> bool:
    """One cell, or a 1-D tessellation: every cell is an axis-aligned box."""
    return node.num_cells == 1 or len(node.scope_vars) == 1


def compute_cell_approximations(circuit: Circuit, domain: Box,
                                node_ids: Optional[Sequence[int]] = None) -> Dict[int, CellApproximation]:
    """Inner and outer boxes for every VT node whose cells are not boxes."""
    approximations: Dict[int, CellApproximation] = {}
    ids = circuit.vt_nodes() if node_ids is None else list(node_ids)
    for nid in ids:
        node = circuit.nodes[nid]
        if vt_cells_are_boxes(node):
            continue
        scope = list(node.scope_vars)
        domain_s = domain.slice(scope)
        if not domain_s.is_bounded():
            raise ConfigError(f"VT node {nid} needs a domain bounded on variables {scope}")
        tess = node.tessellation()
        inner = [inner_box(tess, k, domain_s).embed(scope, circuit.num_vars) for k in range(tess.num_cells)]
        outer = [outer_box(tess, k, domain_s).embed(scope, circuit.num_vars) for k in range(tess.num_cells)]
        approximations[nid] = CellApproximation(inner=inner, outer=outer)
    return approximations


class BoxIntegrator:
    """Memoized interval integration over boxes for one circuit and one evidence set."""

    def __init__(self, circuit: Circuit, approximations: Optional[Dict[int, CellApproximation]] = None,
                 domain=None, evidence: Optional[Dict[int, float]] = None, ignore_gates: bool = False):
        self.circuit = circuit
        self.ignore_gates = ignore_gates
        self.approximations = approximations or {}
        self.domain = as_domain_box(domain, circuit.num_vars)
        self.evidence: Dict[int, float] = {int(k): float(v) for k, v in (evidence or {}).items()}
        for var in self.evidence:
            if not 0 <= var < circuit.num_vars:
                raise ArgumentError(f"Evidence variable {var} out of range")
        self.num_vars = circuit.num_vars
        self._scope_idx = {nid: circuit.scope_list(nid) for nid in circuit.topo_order}
        self._dynamic = self._nodes_above_vt()
        self._static_cache: Dict[Tuple, BoundInterval] = {}
        self._dynamic_cache: Dict[Tuple, BoundInterval] = {}
        self._cell_boxes: Dict[int, List[Box]] = {}
        self._domain_scope: Dict[int, Box] = {}

    def _nodes_above_vt(self) -> Dict[int, bool]:
        flags: Dict[int, bool] = {}
        for nid in self.circuit.topo_order:
            node = self.circuit.nodes[nid]
            flag = isinstance(node, VTSumNode)
            for child in node_children(node):
                flag = flag or flags[child]
            flags[nid] = flag
        return flags

    def invalidate(self):
        self._dynamic_cache.clear()

    def full_box(self) -> Box:
        return Box.unbounded(self.num_vars)

    # === Entry point ===

    def integrate(self, nid: int, box: Box) -> BoundInterval:
        if box.dim != self.num_vars:
            raise ArgumentError(f"Box has dimension {box.dim}, circuit has {self.num_vars} variables")
        if box.is_empty:
            return BoundInterval.zero()
        key = (nid,) + box.key(self._scope_idx[nid])
        cache = self._dynamic_cache if self._dynamic[nid] else self._static_cache
        cached = cache.get(key)
        if cached is not None:
            return cached
        result = self._compute(nid, box)
        cache[key] = result
        return result

    def _compute(self, nid: int, box: Box) -> BoundInterval:
        node = self.circuit.nodes[nid]
        if isinstance(node, GaussianLeaf):
            return self._leaf(node, box)
        if isinstance(node, ProductNode):
            lo = 1.0
            hi = 1.0
            for child in node.children:
                r = self.integrate(child, box)
                lo *= r.lo
                hi *= r.hi
            return BoundInterval(lo, hi)
        if isinstance(node, SumNode):
            return self._mixture(np.exp(node.log_weights), node.children, box)
        if isinstance(node, VTSumNode):
            if self.ignore_gates:
                return self._mixture(np.exp(node.log_mixture), node.experts, box)
            return self._vt(nid, node, box)
        if isinstance(node, HFVSumNode):
            return self._hfv(node, box)
        raise ArgumentError(f"Unknown node type {type(node).__name__} at {nid}")

    def _mixture(self, weights: np.ndarray, children: Sequence[int], box: Box) -> BoundInterval:
        lo = 0.0
        hi = 0.0
        for w, child in zip(weights, children):
            r = self.integrate(child, box)
            lo += w * r.lo
            hi += w * r.hi
        return BoundInterval(lo, hi)

    # === Leaves ===

    def _leaf(self, leaf: GaussianLeaf, box: Box) -> BoundInterval:
        a = float(box.lower[leaf.var])
        b = float(box.upper[leaf.var])
        if leaf.var in self.evidence:
            value = self.evidence[leaf.var]
            if a <= value <= b:
                return BoundInterval.point(float(leaf.density(value)))
            return BoundInterval.zero()
        return BoundInterval.point(leaf.interval_mass(a, b))

    # === HFV gates ===

    def _hfv(self, node: HFVSumNode, box: Box) -> BoundInterval:
        lo_vectors = []
        hi_vectors = []
        for block in node.blocks:
            cell_intervals = [univariate_cells_any_order(c) for c in block.centroids]
            observed_digit = {}
            for i, var in enumerate(block.variables):
                if var in self.evidence and not self.ignore_gates:
                    observed_digit[i] = int(univariate_cell_of(block.centroids[i], [self.evidence[var]])[0])
            lo = np.zeros(block.num_cells)
            hi = np.zeros(block.num_cells)
            for cell in range(block.num_cells):
                digits = block.cell_digits(cell)
                if any(digits[i] != d for i, d in observed_digit.items()):
                    continue
                lower = box.lower.copy()
                upper = box.upper.copy()
                for i, var in enumerate(block.variables):
                    if i in observed_digit or self.ignore_gates:
                        continue
                    a, b = cell_intervals[i][digits[i]]
                    lower[var] = max(lower[var], a)
                    upper[var] = min(upper[var], b)
                r = self.integrate(block.experts[cell], Box(lower, upper))
                lo[cell] = r.lo
                hi[cell] = r.hi
            lo_vectors.append(lo)
            hi_vectors.append(hi)

        weights = np.exp(node.log_joint_mixture).reshape(node.joint_shape)
        lo_total = weights
        hi_total = weights
        for i, (lo, hi) in enumerate(zip(lo_vectors, hi_vectors)):
            shape = [1] * len(node.blocks)
            shape[i] = lo.size
            lo_total = lo_total * lo.reshape(shape)
            hi_total = hi_total * hi.reshape(shape)
        return BoundInterval(float(np.sum(lo_total)), float(np.sum(hi_total)))

    # === VT gates ===

    def _exact_cells(self, nid: int, node: VTSumNode) -> List[Box]:
        if nid not in self._cell_boxes:
            full = self.full_box()
            if node.num_cells == 1:
                cells = [full]
            else:
                var = node.scope_vars[0]
                cells = [full.replace_dim(var, a, b)
                         for a, b in univariate_cells_any_order(node.centroids[:, 0])]
            self._cell_boxes[nid] = cells
        return self._cell_boxes[nid]

    def _domain_for(self, nid: int, node: VTSumNode) -> Box:
        if nid not in self._domain_scope:
            if self.domain is None:
                raise ConfigError(f"VT node {nid} needs a bounded domain for certified integration")
            scope = list(node.scope_vars)
            self._domain_scope[nid] = self.domain.slice(scope).embed(scope, self.num_vars)
        return self._domain_scope[nid]

    def _vt(self, nid: int, node: VTSumNode, box: Box) -> BoundInterval:
        weights = np.exp(node.log_mixture)
        scope = list(node.scope_vars)

        if all(var in self.evidence for var in scope):
            point = np.array([[self.evidence[var] for var in scope]])
            cell = int(nearest_cells(point, node.centroids)[0])
            return self.integrate(node.experts[cell], box).scale(weights[cell])

        if vt_cells_are_boxes(node):
            lo = 0.0
            hi = 0.0
            for w, expert, cell_box in zip(weights, node.experts, self._exact_cells(nid, node)):
                r = self.integrate(expert, box.intersect(cell_box))
                lo += w * r.lo
                hi += w * r.hi
            return BoundInterval(lo, hi)

        approx = self.approximations.get(nid)
        if approx is None:
            # No geometry available: the cell restriction can only be dropped.
            return BoundInterval(0.0, self._mixture(weights, node.experts, box).hi)

        domain_s = self._domain_for(nid, node)
        box_in_domain = domain_s.contains_box(box, scope)
        box_covers_domain = box.contains_box(domain_s, scope)
        partition = approx.partition
        lo_total = 0.0
        hi_total = 0.0
        for k, (w, expert) in enumerate(zip(weights, node.experts)):
            full = self.integrate(expert, box)
            if box_in_domain:
                tail = 0.0
            else:
                in_domain = self.integrate(expert, box.intersect(domain_s))
                tail = max(full.hi - in_domain.lo, 0.0)

            lo_k = self.integrate(expert, box.intersect(approx.inner[k])).lo
            hi_k = self.integrate(expert, box.intersect(approx.outer[k])).hi
            if partition is not None:
                if box_covers_domain and partition.sums_ready:
                    part_lo = float(partition.inside_lo[k])
                    part_hi = float(partition.nonoutside_hi[k])
                else:
                    part_lo, part_hi = self._partition_sums(partition, expert, k, box, domain_s)
                lo_k = max(lo_k, part_lo)
                hi_k = min(hi_k, part_hi)
            lo_total += w * lo_k
            hi_total += w * (hi_k + tail)
        return BoundInterval(lo_total, hi_total)

    def _partition_sums(self, partition: LabeledPartition, expert: int, k: int, box: Box,
                        domain_s: Box) -> Tuple[float, float]:
        lo = 0.0
        hi = 0.0
        for bid, part_box in partition.boxes.items():
            label = partition.labels[bid][k]
            if label == LABEL_OUTSIDE:
                continue
            r = self.integrate(expert, box.intersect(part_box))
            hi += r.hi
            if label == LABEL_INSIDE and counts_toward_lower(part_box, domain_s, self.evidence,
                                                             partition.scope):
                lo += r.lo
        return lo, hi

    def expert_integrals(self, node: VTSumNode, box: Box) -> Tuple[np.ndarray, np.ndarray]:
        """Per-cell (lo, hi) integrals of the experts over a box."""
        lo = np.zeros(node.num_cells)
        hi = np.zeros(node.num_cells)
        for k, expert in enumerate(node.experts):
            r = self.integrate(expert, box)
            lo[k] = r.lo
            hi[k] = r.hi
        return lo, hi


def integrate_box(circuit: Circuit, node_id: int, box: Box, domain=None,
                  evidence: Optional[Dict[int, float]] = None) -> BoundInterval:
    """
    Integral of the subcircuit at ``node_id`` over a box given on its scope
    (sorted variable order). Nested VT gates use inner/outer boxes taken
    against ``domain``, or against the box itself when no domain is given.
    """
    scope = circuit.scope_list(node_id)
    if box.dim != len(scope):
        raise ArgumentError(
            f"Box has dimension {box.dim}, node {node_id} has scope of size {len(scope)}")
    full = box.embed(scope, circuit.num_vars)
    if domain is None:
        domain_box = full if full.is_bounded(scope) else None
    else:
        domain_box = as_domain_box(domain, circuit.num_vars)

    vt_ids = [nid for nid in circuit.vt_nodes() if nid in _subtree(circuit, node_id)]
    approximations = {}
    if vt_ids and domain_box is not None:
        unbounded = np.where(np.isfinite(domain_box.lower) & np.isfinite(domain_box.upper),
                             0.0, 1.0)
        if not np.any(unbounded[[v for nid in vt_ids for v in circuit.nodes[nid].scope_vars]]):
            approximations = compute_cell_approximations(circuit, domain_box, vt_ids)
    integrator = BoxIntegrator(circuit, approximations, domain=domain_box if approximations else None,
                               evidence=evidence)
    return integrator.integrate(node_id, full)


def _subtree(circuit: Circuit, node_id: int) -> set:
    seen = set()
    stack = [node_id]
    while stack:
        nid = stack.pop()
        if nid in seen:
            continue
        seen.add(nid)
        stack.extend(node_children(circuit.nodes[nid]))
    return seen
