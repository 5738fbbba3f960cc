"""
Probabilistic circuit representation.

A circuit is a flat arena of nodes addressed by integer id. Leaves are
Gaussian densities; internal nodes are products, weighted sums, and two
gated sums: the Voronoi-gated sum (one expert per Voronoi cell of its
scope) and the hierarchically factorized Voronoi sum (joint cells that are
products of per-block cells, each block cell a product of univariate
intervals).

The topological order (children first) of the nodes reachable from the
root is computed once at construction; all passes walk it forwards or
backwards.
"""

import sys
import os
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.errors import ArgumentError, StructureError
from models.leaves import GaussianLeaf
from models.tessellation import MIN_CENTROID_DISTANCE, Tessellation, closest_centroid_pair

WEIGHT_TOLERANCE = 1e-9


def _check_log_weights(log_weights: np.ndarray, count: int, what: str):
    if log_weights.shape != (count,):
        raise StructureError(f"{what}: expected {count} log-weights, got shape {log_weights.shape}")
    if np.any(np.isnan(log_weights)) or np.any(log_weights == np.inf):
        raise StructureError(f"{what}: log-weights must not be NaN or +inf")
    total = float(np.exp(logsumexp(log_weights)))
    if abs(total - 1.0) > WEIGHT_TOLERANCE:
        raise StructureError(f"{what}: weights sum to {total}, expected 1")


@dataclass
class ProductNode:
    children: List[int]


@dataclass
class SumNode:
    children: List[int]
    log_weights: np.ndarray

    def __post_init__(self):
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        _check_log_weights(self.log_weights, len(self.children), "Sum node")


@dataclass
class VTSumNode:
    """Sum gated by the Voronoi tessellation of ``centroids`` over ``scope_vars``."""

    scope_vars: List[int]
    centroids: np.ndarray
    log_mixture: np.ndarray
    experts: List[int]

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=float).reshape(len(self.experts), -1)
        self.log_mixture = np.asarray(self.log_mixture, dtype=float)
        if self.centroids.shape[1] != len(self.scope_vars):
            raise StructureError(
                f"VT node: centroid dimension {self.centroids.shape[1]} does not match "
                f"scope size {len(self.scope_vars)}")
        _check_log_weights(self.log_mixture, len(self.experts), "VT node")

    @property
    def num_cells(self) -> int:
        return len(self.experts)

    def tessellation(self) -> Tessellation:
        return Tessellation(self.centroids)


@dataclass
class HFVBlock:
    """
    One factor block of an HFV-gated sum.

    ``variables`` is the block's gating chain and ``centroids[i]`` the
    univariate centroids of ``variables[i]``. Block cells are indexed in
    row-major order over the chain, so a cell is a product of one interval
    per variable. ``experts[c]`` is the node used for cell c.
    """

    variables: List[int]
    centroids: List[np.ndarray]
    experts: List[int]

    def __post_init__(self):
        self.centroids = [np.asarray(c, dtype=float).reshape(-1) for c in self.centroids]
        if len(self.centroids) != len(self.variables):
            raise StructureError("HFV block: one centroid list per chain variable required")
        if any(c.size < 1 for c in self.centroids):
            raise StructureError("HFV block: every chain variable needs at least one centroid")
        if len(self.experts) != self.num_cells:
            raise StructureError(
                f"HFV block: {self.num_cells} cells but {len(self.experts)} experts")

    @property
    def cell_shape(self) -> Tuple[int, ...]:
        return tuple(c.size for c in self.centroids)

    @property
    def num_cells(self) -> int:
        return int(np.prod(self.cell_shape))

    def cell_digits(self, cell: int) -> Tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(cell, self.cell_shape))


@dataclass
class HFVSumNode:
    """Sum over joint cells (k_1, ..., k_m), stored row-major in ``log_joint_mixture``."""

    blocks: List[HFVBlock]
    log_joint_mixture: np.ndarray

    def __post_init__(self):
        self.log_joint_mixture = np.asarray(self.log_joint_mixture, dtype=float).reshape(-1)
        _check_log_weights(self.log_joint_mixture, self.num_joint_cells, "HFV node")

    @property
    def joint_shape(self) -> Tuple[int, ...]:
        return tuple(block.num_cells for block in self.blocks)

    @property
    def num_joint_cells(self) -> int:
        return int(np.prod(self.joint_shape))

    @property
    def children(self) -> List[int]:
        ids = []
        for block in self.blocks:
            for expert in block.experts:
                if expert not in ids:
                    ids.append(expert)
        return ids


Node = Union[GaussianLeaf, ProductNode, SumNode, VTSumNode, HFVSumNode]


def node_children(node: Node) -> List[int]:
    if isinstance(node, GaussianLeaf):
        return []
    if isinstance(node, VTSumNode):
        return list(node.experts)
    return list(node.children)


@dataclass
class StructureReport:
    """Result of structural validation. Violators are listed by node id."""

    smooth: bool
    decomposable: bool
    scopes: Dict[int, FrozenSet[int]]
    non_smooth: List[int] = field(default_factory=list)
    non_decomposable: List[int] = field(default_factory=list)
    coincident_centroids: List[int] = field(default_factory=list)

    @property
    def is_valid(self) -> bool:
        return self.smooth and self.decomposable and not self.coincident_centroids


class Circuit:
    """
    Rooted DAG of nodes over variables 0..num_vars-1.

    Construction checks child ids, acyclicity and that the root covers all
    variables. Smoothness and decomposability are reported by
    ``validate_structure`` rather than enforced here.
    """

    def __init__(self, nodes: Sequence[Node], root: int, num_vars: int):
        self.nodes: List[Node] = list(nodes)
        self.root = int(root)
        self.num_vars = int(num_vars)
        if not 0 <= self.root < len(self.nodes):
            raise StructureError(f"Root id {self.root} is not a node", node_id=self.root)
        for nid, node in enumerate(self.nodes):
            for child in node_children(node):
                if not 0 <= child < len(self.nodes):
                    raise StructureError(f"Node {nid} references missing child {child}", node_id=nid)
        self.topo_order: List[int] = self._topological_order()
        self.scopes: Dict[int, FrozenSet[int]] = self._compute_scopes()
        root_scope = self.scopes[self.root]
        if root_scope != frozenset(range(self.num_vars)):
            raise StructureError(
                f"Root scope {sorted(root_scope)} does not cover variables 0..{self.num_vars - 1}",
                node_id=self.root)
        self._parents: Dict[int, List[int]] = {nid: [] for nid in self.topo_order}
        for nid in self.topo_order:
            for child in node_children(self.nodes[nid]):
                if nid not in self._parents[child]:
                    self._parents[child].append(nid)

    def _topological_order(self) -> List[int]:
        order: List[int] = []
        state: Dict[int, int] = {}  # 1 visiting, 2 done
        stack: List[Tuple[int, int]] = [(self.root, 0)]
        state[self.root] = 1
        while stack:
            nid, idx = stack.pop()
            children = node_children(self.nodes[nid])
            if idx < len(children):
                stack.append((nid, idx + 1))
                child = children[idx]
                mark = state.get(child, 0)
                if mark == 1:
                    raise StructureError(f"Cycle through node {child}", node_id=child)
                if mark == 0:
                    state[child] = 1
                    stack.append((child, 0))
            else:
                state[nid] = 2
                order.append(nid)
        return order

    def _compute_scopes(self) -> Dict[int, FrozenSet[int]]:
        scopes: Dict[int, FrozenSet[int]] = {}
        for nid in self.topo_order:
            node = self.nodes[nid]
            if isinstance(node, GaussianLeaf):
                if node.var >= self.num_vars:
                    raise StructureError(f"Leaf {nid} uses variable {node.var} >= {self.num_vars}",
                                         node_id=nid)
                scopes[nid] = frozenset([node.var])
            elif isinstance(node, VTSumNode):
                scope = frozenset(node.scope_vars)
                for expert in node.experts:
                    scope = scope | scopes[expert]
                scopes[nid] = scope
            elif isinstance(node, HFVSumNode):
                scope = frozenset()
                for block in node.blocks:
                    scope = scope | frozenset(block.variables)
                    for expert in block.experts:
                        scope = scope | scopes[expert]
                scopes[nid] = scope
            else:
                children = node_children(node)
                if not children:
                    raise StructureError(f"Internal node {nid} has no children", node_id=nid)
                scope = frozenset()
                for child in children:
                    scope = scope | scopes[child]
                scopes[nid] = scope
        return scopes

    # === Accessors ===

    def __len__(self) -> int:
        return len(self.nodes)

    def node(self, nid: int) -> Node:
        return self.nodes[nid]

    def parents(self, nid: int) -> List[int]:
        return self._parents.get(nid, [])

    def scope_list(self, nid: int) -> List[int]:
        return sorted(self.scopes[nid])

    def ids_of(self, node_type) -> List[int]:
        return [nid for nid in self.topo_order if isinstance(self.nodes[nid], node_type)]

    def vt_nodes(self) -> List[int]:
        return self.ids_of(VTSumNode)

    def hfv_nodes(self) -> List[int]:
        return self.ids_of(HFVSumNode)

    def has_gates(self) -> bool:
        return bool(self.vt_nodes() or self.hfv_nodes())


def validate_structure(circuit: Circuit) -> StructureReport:
    """Check smoothness, decomposability and distinct VT centroids of every reachable node."""
    scopes = circuit.scopes
    non_smooth: List[int] = []
    non_decomposable: List[int] = []
    coincident: List[int] = []
    for nid in circuit.topo_order:
        node = circuit.nodes[nid]
        if isinstance(node, SumNode):
            if any(scopes[c] != scopes[nid] for c in node.children):
                non_smooth.append(nid)
        elif isinstance(node, VTSumNode):
            if any(scopes[e] != scopes[nid] for e in node.experts):
                non_smooth.append(nid)
            closest = closest_centroid_pair(node.centroids)
            if closest is not None and closest[2] <= MIN_CENTROID_DISTANCE:
                coincident.append(nid)
        elif isinstance(node, ProductNode):
            seen = set()
            for child in node.children:
                if seen & scopes[child]:
                    non_decomposable.append(nid)
                    break
                seen |= scopes[child]
        elif isinstance(node, HFVSumNode):
            seen = set()
            for block in node.blocks:
                block_scope = frozenset(block.variables)
                if seen & block_scope:
                    non_decomposable.append(nid)
                    break
                seen |= block_scope
            for block in node.blocks:
                if any(scopes[e] != frozenset(block.variables) for e in block.experts):
                    non_smooth.append(nid)
                    break
    return StructureReport(
        smooth=not non_smooth,
        decomposable=not non_decomposable,
        scopes=dict(scopes),
        non_smooth=non_smooth,
        non_decomposable=non_decomposable,
        coincident_centroids=coincident,
    )


def reduce_single_cell_gates(circuit: Circuit) -> Circuit:
    """
    Replace single-cell gates by ungated nodes: a one-cell VT sum becomes a
    one-child sum and an HFV sum whose blocks all have one cell becomes a
    product of the block experts.
    """
    nodes: List[Node] = []
    for node in circuit.nodes:
        if isinstance(node, VTSumNode) and node.num_cells == 1:
            nodes.append(SumNode(children=[node.experts[0]], log_weights=np.zeros(1)))
        elif isinstance(node, HFVSumNode) and node.num_joint_cells == 1:
            nodes.append(ProductNode(children=[block.experts[0] for block in node.blocks]))
        else:
            nodes.append(node)
    return Circuit(nodes, circuit.root, circuit.num_vars)


def relabel(circuit: Circuit, permutation: Sequence[int]) -> Circuit:
    """Copy of the circuit with node ``i`` moved to id ``permutation[i]``."""
    perm = list(permutation)
    if sorted(perm) != list(range(len(circuit.nodes))):
        raise ArgumentError("Relabeling must be a permutation of node ids")

    def remap(node: Node) -> Node:
        if isinstance(node, GaussianLeaf):
            return GaussianLeaf(var=node.var, mean=node.mean, stddev=node.stddev)
        if isinstance(node, ProductNode):
            return ProductNode(children=[perm[c] for c in node.children])
        if isinstance(node, SumNode):
            return SumNode(children=[perm[c] for c in node.children], log_weights=node.log_weights.copy())
        if isinstance(node, VTSumNode):
            return VTSumNode(scope_vars=list(node.scope_vars), centroids=node.centroids.copy(),
                             log_mixture=node.log_mixture.copy(), experts=[perm[e] for e in node.experts])
        return HFVSumNode(
            blocks=[HFVBlock(variables=list(b.variables), centroids=[c.copy() for c in b.centroids],
                             experts=[perm[e] for e in b.experts]) for b in node.blocks],
            log_joint_mixture=node.log_joint_mixture.copy())

    nodes: List[Node] = [None] * len(circuit.nodes)  # type: ignore
    for old, node in enumerate(circuit.nodes):
        nodes[perm[old]] = remap(node)
    return Circuit(nodes, perm[circuit.root], circuit.num_vars)
