"""
Log-domain forward evaluation of circuits under hard or soft gating.

All node values are log-densities for a whole batch of points; sums use
log-sum-exp. Hard gates route each point to the expert of the cell that
contains it (lowest cell index on ties). Soft gates mix every expert with
softmax-over-distances weights.
"""

import sys
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import logsumexp

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.circuit import Circuit, HFVBlock, HFVSumNode, ProductNode, SumNode, VTSumNode
from models.errors import ArgumentError, NumericError
from models.leaves import GaussianLeaf
from geometry.cells import cell_mask, nearest_cells, univariate_cell_of
from training.soft_gates import log_univariate_soft_weights, log_soft_weights


@dataclass(frozen=True)
class GatingMode:
    """Hard gating, or soft gating at inverse temperature ``alpha``."""

    kind: str = "hard"
    alpha: Optional[float] = None

    @classmethod
    def hard(cls) -> "GatingMode":
        return cls("hard", None)

    @classmethod
    def soft(cls, alpha: float) -> "GatingMode":
        if alpha is None or not alpha > 0.0:
            raise ArgumentError(f"Soft gating needs alpha > 0, got {alpha}")
        return cls("soft", float(alpha))

    @property
    def is_soft(self) -> bool:
        return self.kind == "soft"

    def __str__(self):
        return "hard" if not self.is_soft else f"soft(alpha={self.alpha:g})"


HARD = GatingMode.hard()


def block_cell_indices(block: HFVBlock, values: np.ndarray) -> np.ndarray:
    """Row-major block cell of each point; ``values`` holds the chain variables as columns."""
    digits = [univariate_cell_of(c, values[:, i]) for i, c in enumerate(block.centroids)]
    if len(digits) == 1:
        return digits[0]
    return np.ravel_multi_index(tuple(digits), block.cell_shape)


def block_log_soft_gates(block: HFVBlock, values: np.ndarray, alpha: float) -> np.ndarray:
    """(N, cells) log of the product of univariate soft gates along the chain."""
    n = values.shape[0]
    total = np.zeros((n,) + (1,) * len(block.centroids))
    for i, c in enumerate(block.centroids):
        logw = log_univariate_soft_weights(values[:, i], c, alpha)
        shape = [n] + [1] * len(block.centroids)
        shape[i + 1] = c.size
        total = total + logw.reshape(shape)
    return total.reshape(n, -1)


def _check_finite(values: np.ndarray, nid: int):
    if np.any(np.isnan(values)) or np.any(values == np.inf):
        raise NumericError(f"Non-finite log-value at node {nid}", node_id=nid)


def forward_log_values(circuit: Circuit, X: np.ndarray, mode: GatingMode = HARD) -> Dict[int, np.ndarray]:
    """Log-value of every reachable node for every row of ``X`` (N x D)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != circuit.num_vars:
        raise ArgumentError(f"Input has {X.shape[1]} columns, circuit has {circuit.num_vars} variables")
    if not np.all(np.isfinite(X)):
        raise ArgumentError("Inputs must be finite")
    n = X.shape[0]
    rows = np.arange(n)
    values: Dict[int, np.ndarray] = {}

    for nid in circuit.topo_order:
        node = circuit.nodes[nid]
        if isinstance(node, GaussianLeaf):
            v = node.log_density(X[:, node.var])
        elif isinstance(node, ProductNode):
            v = np.zeros(n)
            for child in node.children:
                v = v + values[child]
        elif isinstance(node, SumNode):
            stacked = np.stack([values[c] for c in node.children]) + node.log_weights[:, None]
            v = logsumexp(stacked, axis=0)
        elif isinstance(node, VTSumNode):
            points = X[:, node.scope_vars]
            experts = np.stack([values[e] for e in node.experts])
            if mode.is_soft:
                logw = log_soft_weights(points, node.centroids, mode.alpha)
                v = logsumexp(logw.T + node.log_mixture[:, None] + experts, axis=0)
            else:
                cells = nearest_cells(points, node.centroids)
                v = node.log_mixture[cells] + experts[cells, rows]
        elif isinstance(node, HFVSumNode):
            v = _hfv_forward(node, X, values, mode)
        else:
            raise ArgumentError(f"Unknown node type {type(node).__name__} at {nid}")
        _check_finite(v, nid)
        values[nid] = v
    return values


def _hfv_forward(node: HFVSumNode, X: np.ndarray, values: Dict[int, np.ndarray],
                 mode: GatingMode) -> np.ndarray:
    n = X.shape[0]
    if not mode.is_soft:
        cells = [block_cell_indices(block, X[:, block.variables]) for block in node.blocks]
        joint = np.ravel_multi_index(tuple(cells), node.joint_shape) if len(cells) > 1 else cells[0]
        v = node.log_joint_mixture[joint].copy()
        for block, cell in zip(node.blocks, cells):
            experts = np.stack([values[e] for e in block.experts])
            v = v + experts[cell, np.arange(n)]
        return v

    m = len(node.blocks)
    total = node.log_joint_mixture.reshape((1,) + node.joint_shape)
    for i, block in enumerate(node.blocks):
        term = block_log_soft_gates(block, X[:, block.variables], mode.alpha)
        term = term + np.stack([values[e] for e in block.experts], axis=1)
        shape = [n] + [1] * m
        shape[i + 1] = block.num_cells
        total = total + term.reshape(shape)
    return logsumexp(total.reshape(n, -1), axis=1)


def eval_log_density_batch(circuit: Circuit, X: np.ndarray, mode: GatingMode = HARD) -> np.ndarray:
    return forward_log_values(circuit, X, mode)[circuit.root]


def eval_log_density(circuit: Circuit, x, mode: GatingMode = HARD) -> float:
    """log f(x) for a single point."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return float(eval_log_density_batch(circuit, x, mode)[0])


@dataclass
class DeterminismReport:
    """Hard-mode routing of one point along its evaluation path."""

    deterministic: bool
    boundary_hits: List[int] = field(default_factory=list)
    nondeterministic_sums: List[int] = field(default_factory=list)
    active_cells: Dict[int, Tuple[int, ...]] = field(default_factory=dict)


def determinism_report(circuit: Circuit, x) -> DeterminismReport:
    """
    Walk the hard-mode evaluation path from the root. A gate whose point sits
    exactly on a cell boundary is a boundary hit (resolved to the lowest
    index); an ordinary sum with more than one positive child is
    non-deterministic.
    """
    x = np.asarray(x, dtype=float).reshape(1, -1)
    values = forward_log_values(circuit, x, HARD)
    report = DeterminismReport(deterministic=True)
    visited = set()
    stack = [circuit.root]
    while stack:
        nid = stack.pop()
        if nid in visited:
            continue
        visited.add(nid)
        node = circuit.nodes[nid]
        if isinstance(node, GaussianLeaf):
            continue
        if isinstance(node, ProductNode):
            stack.extend(node.children)
        elif isinstance(node, SumNode):
            positive = [c for c, w in zip(node.children, node.log_weights)
                        if w > -np.inf and values[c][0] > -np.inf]
            if len(positive) > 1:
                report.nondeterministic_sums.append(nid)
            stack.extend(positive)
        elif isinstance(node, VTSumNode):
            point = x[:, node.scope_vars]
            cell = int(nearest_cells(point, node.centroids)[0])
            if sum(bool(cell_mask(point, node.centroids, k)[0]) for k in range(node.num_cells)) > 1:
                report.boundary_hits.append(nid)
            report.active_cells[nid] = (cell,)
            stack.append(node.experts[cell])
        elif isinstance(node, HFVSumNode):
            cells = []
            for block in node.blocks:
                digits = []
                for var, centroids in zip(block.variables, block.centroids):
                    digit = int(univariate_cell_of(centroids, [x[0, var]])[0])
                    ordered = np.sort(centroids)
                    mids = 0.5 * (ordered[:-1] + ordered[1:])
                    if np.any(mids == x[0, var]):
                        if nid not in report.boundary_hits:
                            report.boundary_hits.append(nid)
                    digits.append(digit)
                cell = int(np.ravel_multi_index(tuple(digits), block.cell_shape))
                cells.append(cell)
                stack.append(block.experts[cell])
            report.active_cells[nid] = tuple(cells)
    report.deterministic = not report.boundary_hits and not report.nondeterministic_sums
    return report


def is_deterministic_at(circuit: Circuit, x) -> bool:
    return determinism_report(circuit, x).deterministic
