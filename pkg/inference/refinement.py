"""
Anytime refinement of certified partition-function bounds.

Each VT node whose cells are not boxes gets a labeled partition of its
domain. Refinement repeatedly bisects Boundary boxes along their longest
dimension and reclassifies the halves, which moves mass out of the
undecided region. Two strategies are available:

  largest_gap  pop the Boundary box with the largest gap contribution
  uniform      bisect every Boundary box once per iteration (breadth first)

Bounds are valid after every iteration; the reported pair is the running
best (max of lower bounds, min of upper bounds) so the trace is monotone.
"""

import csv
import heapq
import sys
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.circuit import Circuit, HFVSumNode, ProductNode, SumNode, VTSumNode
from models.errors import ConfigError
from models.events import EventType, default_event_handler
from models.tessellation import Box
from inference.bounds import BoundInterval, as_domain_box
from inference.box_integrator import BoxIntegrator, compute_cell_approximations
from inference.partition import LabeledPartition, counts_toward_lower

TRACE_COLUMNS = ["iter", "z_lo", "z_hi", "gap", "boxes_total", "boxes_boundary"]


class RefinementStrategy(Enum):
    LARGEST_GAP = "largest_gap"
    UNIFORM = "uniform"


@dataclass
class RefinementConfig:
    epsilon: float = 1e-3
    max_iters: int = 10000
    strategy: RefinementStrategy = RefinementStrategy.LARGEST_GAP
    warm_start: bool = True          # combine with inner/outer boxes
    stop_on_domain_gap: bool = False  # stop on the gap of the integral over the domain only
    progress_every: int = 500
    resync_every: int = 256

    def __post_init__(self):
        if isinstance(self.strategy, str):
            try:
                self.strategy = RefinementStrategy(self.strategy)
            except ValueError:
                raise ConfigError(f"Unknown refinement strategy '{self.strategy}'")
        if not self.epsilon > 0.0:
            raise ConfigError(f"Refinement epsilon must be positive, got {self.epsilon}")
        if self.max_iters < 0:
            raise ConfigError(f"Refinement budget must be non-negative, got {self.max_iters}")


@dataclass
class TraceRecord:
    iteration: int
    z_lo: float
    z_hi: float
    gap: float
    boxes_total: int
    boxes_boundary: int
    domain_lo: float = 0.0
    domain_hi: float = 0.0


@dataclass
class RefinementResult:
    """Final bounds on Z (full space) and on the integral over the domain."""

    bounds: BoundInterval
    domain_bounds: BoundInterval
    converged: bool
    iterations: int
    trace: List[TraceRecord] = field(default_factory=list)

    def to_report(self) -> Dict:
        return {
            "z_lo": self.bounds.lo,
            "z_hi": self.bounds.hi,
            "gap": self.bounds.gap,
            "iters": self.iterations,
            "converged": self.converged,
            "domain_z_lo": self.domain_bounds.lo,
            "domain_z_hi": self.domain_bounds.hi,
        }

    def write_trace_csv(self, path: str):
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(TRACE_COLUMNS)
            for rec in self.trace:
                writer.writerow([rec.iteration, repr(rec.z_lo), repr(rec.z_hi), repr(rec.gap),
                                 rec.boxes_total, rec.boxes_boundary])


def path_weights(circuit: Circuit) -> Dict[int, float]:
    """
    Weight with which each node's integral enters the root: products pass
    their weight through, sums and gates scale by the mixture weights.
    Summed over all parents.
    """
    weights = {nid: 0.0 for nid in circuit.topo_order}
    weights[circuit.root] = 1.0
    for nid in reversed(circuit.topo_order):
        w = weights[nid]
        node = circuit.nodes[nid]
        if isinstance(node, ProductNode):
            for child in node.children:
                weights[child] += w
        elif isinstance(node, SumNode):
            for child, lw in zip(node.children, node.log_weights):
                weights[child] += w * float(np.exp(lw))
        elif isinstance(node, VTSumNode):
            for expert, lw in zip(node.experts, node.log_mixture):
                weights[expert] += w * float(np.exp(lw))
        elif isinstance(node, HFVSumNode):
            joint = np.exp(node.log_joint_mixture).reshape(node.joint_shape)
            for i, block in enumerate(node.blocks):
                axes = tuple(a for a in range(len(node.blocks)) if a != i)
                marginal = joint.sum(axis=axes) if axes else joint
                for cell, expert in enumerate(block.experts):
                    weights[expert] += w * float(marginal[cell])
    return weights


def gap_contribution(integrator: BoxIntegrator, node_id: int, box: Box, cell: int,
                     path_weight: float = 1.0) -> float:
    """pi_k times the upper integral of expert k over the box, times the node's path weight."""
    if box.is_empty:
        return 0.0
    node = integrator.circuit.nodes[node_id]
    upper = integrator.integrate(node.experts[cell], box).hi
    return float(np.exp(node.log_mixture[cell])) * upper * path_weight


class CertifiedRefiner:
    """
    Owns the partitions, the integrator and the priority queue of one
    refinement run.
    """

    def __init__(self, circuit: Circuit, domain, evidence: Optional[Dict[int, float]] = None,
                 config: Optional[RefinementConfig] = None, emit_event_callback=None):
        self.circuit = circuit
        self.config = config or RefinementConfig()
        self.emit_event = emit_event_callback or default_event_handler
        self.evidence = dict(evidence or {})
        self.domain = as_domain_box(domain, circuit.num_vars)
        if self.domain is None:
            raise ConfigError("Certified refinement requires a bounded domain")
        if not self.domain.is_bounded():
            raise ConfigError("Certified refinement requires a bounded domain")

        self.approximations = compute_cell_approximations(circuit, self.domain)
        if not self.config.warm_start:
            for nid, approx in self.approximations.items():
                scope = circuit.nodes[nid].scope_vars
                domain_s = self.domain.slice(scope).embed(scope, circuit.num_vars)
                approx.inner = [Box.empty(circuit.num_vars)] * len(approx.inner)
                approx.outer = [domain_s] * len(approx.outer)

        self.integrator = BoxIntegrator(circuit, self.approximations, domain=self.domain,
                                        evidence=self.evidence)
        self.weights = path_weights(circuit)
        self.partitions: Dict[int, LabeledPartition] = {}
        self._queue: List[Tuple[float, int, int, int]] = []
        self._seq = 0
        for nid, approx in self.approximations.items():
            node = circuit.nodes[nid]
            scope = list(node.scope_vars)
            domain_s = self.domain.slice(scope).embed(scope, circuit.num_vars)
            partition = LabeledPartition(nid, node.tessellation(), scope, domain_s)
            box_id = partition.add_box(domain_s)
            self._register(partition, box_id)
            partition.sums_ready = True
            approx.partition = partition
            self.partitions[nid] = partition

        self.iteration = 0
        self.best_lo = 0.0
        self.best_hi = np.inf
        self.best_domain_lo = 0.0
        self.best_domain_hi = np.inf
        self.trace: List[TraceRecord] = []

    # === Partition bookkeeping ===

    def _register(self, partition: LabeledPartition, box_id: int):
        node = self.circuit.nodes[partition.node_id]
        box = partition.boxes[box_id]
        lo, hi = self.integrator.expert_integrals(node, box)
        credit = counts_toward_lower(box, partition.domain, self.evidence, partition.scope)
        partition.set_integrals(box_id, lo, hi, credit)
        boundary = partition.boundary_cells(box_id)
        if boundary.size:
            pi = np.exp(node.log_mixture[boundary])
            priority = float(np.sum(pi * hi[boundary])) * self.weights.get(partition.node_id, 1.0)
            heapq.heappush(self._queue, (-priority, self._seq, partition.node_id, box_id))
            self._seq += 1

    def _split(self, partition: LabeledPartition, box_id: int):
        for child in partition.split(box_id):
            self._register(partition, child)

    def _pop_largest(self) -> Optional[Tuple[LabeledPartition, int]]:
        while self._queue:
            _, _, nid, box_id = heapq.heappop(self._queue)
            partition = self.partitions[nid]
            if box_id in partition.boxes:
                return partition, box_id
        return None

    # === Bounds ===

    def current_bounds(self) -> Tuple[BoundInterval, BoundInterval]:
        """Running-best bounds on Z and on the domain integral."""
        self.integrator.invalidate()
        full = self.integrator.integrate(self.circuit.root, self.integrator.full_box())
        restricted = self.integrator.integrate(self.circuit.root, self.domain)
        self.best_lo = max(self.best_lo, full.lo)
        self.best_hi = min(self.best_hi, full.hi)
        self.best_domain_lo = max(self.best_domain_lo, restricted.lo)
        self.best_domain_hi = min(self.best_domain_hi, restricted.hi)
        return (BoundInterval(self.best_lo, self.best_hi),
                BoundInterval(self.best_domain_lo, self.best_domain_hi))

    def full_partition_bounds(self) -> BoundInterval:
        """Bounds on Z recomputed from every partition box, without running sums."""
        for partition in self.partitions.values():
            partition.sums_ready = False
        self.integrator.invalidate()
        try:
            return self.integrator.integrate(self.circuit.root, self.integrator.full_box())
        finally:
            for partition in self.partitions.values():
                partition.sums_ready = True
            self.integrator.invalidate()

    def _record(self, bounds: BoundInterval, domain_bounds: BoundInterval):
        boundary = sum(len(p.boundary_ids()) for p in self.partitions.values())
        total = sum(len(p) for p in self.partitions.values())
        self.trace.append(TraceRecord(
            iteration=self.iteration, z_lo=bounds.lo, z_hi=bounds.hi, gap=bounds.gap,
            boxes_total=total, boxes_boundary=boundary,
            domain_lo=domain_bounds.lo, domain_hi=domain_bounds.hi))

    def _target_gap(self, bounds: BoundInterval, domain_bounds: BoundInterval) -> float:
        return domain_bounds.gap if self.config.stop_on_domain_gap else bounds.gap

    # === Main loop ===

    def step(self) -> bool:
        """One refinement iteration; False when there is nothing left to split."""
        if self.config.strategy == RefinementStrategy.UNIFORM:
            work = [(p, bid) for p in self.partitions.values() for bid in p.boundary_ids()]
            if not work:
                return False
            for partition, box_id in work:
                self._split(partition, box_id)
            self._queue.clear()
        else:
            popped = self._pop_largest()
            if popped is None:
                return False
            self._split(*popped)
        self.iteration += 1
        if self.iteration % self.config.resync_every == 0:
            for partition in self.partitions.values():
                partition.resync_sums()
        return True

    def run(self) -> RefinementResult:
        bounds, domain_bounds = self.current_bounds()
        self._record(bounds, domain_bounds)
        converged = self._target_gap(bounds, domain_bounds) <= self.config.epsilon

        while not converged and self.iteration < self.config.max_iters:
            if not self.step():
                break
            bounds, domain_bounds = self.current_bounds()
            self._record(bounds, domain_bounds)
            converged = self._target_gap(bounds, domain_bounds) <= self.config.epsilon
            if self.config.progress_every and self.iteration % self.config.progress_every == 0:
                self.emit_event("refiner", EventType.REFINEMENT_PROGRESS,
                                f"Iteration {self.iteration}: Z in {bounds}", "low",
                                {"iteration": self.iteration, **bounds.to_dict()})

        if converged:
            self.emit_event("refiner", EventType.REFINEMENT_CONVERGED,
                            f"Converged after {self.iteration} iterations: Z in {bounds}", "normal",
                            {"iteration": self.iteration, **bounds.to_dict()})
        else:
            self.emit_event("refiner", EventType.REFINEMENT_BUDGET_EXHAUSTED,
                            f"Stopped after {self.iteration} iterations with gap {bounds.gap:.3e}",
                            "high", {"iteration": self.iteration, **bounds.to_dict()})
        return RefinementResult(bounds=bounds, domain_bounds=domain_bounds, converged=converged,
                                iterations=self.iteration, trace=list(self.trace))


def refine(circuit: Circuit, domain, epsilon: float = 1e-3, max_iters: int = 10000,
           strategy=RefinementStrategy.LARGEST_GAP, evidence: Optional[Dict[int, float]] = None,
           config: Optional[RefinementConfig] = None, emit_event_callback=None) -> RefinementResult:
    """Run anytime refinement until the gap is at most ``epsilon`` or the budget is spent."""
    if config is None:
        config = RefinementConfig(epsilon=epsilon, max_iters=max_iters, strategy=strategy)
    refiner = CertifiedRefiner(circuit, domain, evidence=evidence, config=config,
                               emit_event_callback=emit_event_callback)
    return refiner.run()
