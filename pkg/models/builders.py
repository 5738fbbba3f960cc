"""
Circuit builders aligned to a vtree.

All three model kinds share one layered layout. Every vtree leaf gets
``units`` Gaussian leaves. Every internal vtree node gets ``units`` region
nodes, each combining a mixture over the left child's regions with a
mixture over the right child's regions:

  baseline   product of the two mixtures
  hfv        HFV sum whose left/right block cells each get their own mixture
  vt         baseline layers, with the root sum replaced by a VT sum of K
             experts, each its own sum over the shared root regions

The root is a sum over the regions of the root vtree node. With one
centroid per variable, ``build_hfv`` draws the same parameters in the same
order as ``build_baseline`` and reduces to it.
"""

import sys
import os
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.circuit import Circuit, HFVBlock, HFVSumNode, Node, ProductNode, SumNode, VTSumNode
from models.errors import ArgumentError, StructureError
from models.leaves import GaussianLeaf
from models.vtree import Vtree
from geometry.cells import univariate_cells

DEFAULT_JOINT_CAP = 4096
INITIAL_STDDEV = 1.0


class _Arena:
    """Append-only node list handing out ids."""

    def __init__(self, rng: np.random.Generator, data: Optional[np.ndarray]):
        self.nodes: List[Node] = []
        self.rng = rng
        self.data = data

    def add(self, node: Node) -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1

    @property
    def next_id(self) -> int:
        return len(self.nodes)

    def log_simplex(self, size: int) -> np.ndarray:
        w = self.rng.uniform(0.5, 1.5, size)
        logw = np.log(w)
        return logw - logsumexp(logw)

    def mixture(self, children: Sequence[int]) -> int:
        return self.add(SumNode(children=list(children), log_weights=self.log_simplex(len(children))))

    def leaves(self, var: int, units: int) -> List[int]:
        if self.data is not None:
            means = self.rng.choice(self.data[:, var], size=units, replace=len(self.data) < units)
        else:
            means = self.rng.normal(0.0, 1.0, size=units)
        return [self.add(GaussianLeaf(var=var, mean=float(m), stddev=INITIAL_STDDEV)) for m in means]


RegionFactory = Callable[[_Arena, Vtree, List[int], List[int]], int]


def _product_region(arena: _Arena, vnode: Vtree, left: List[int], right: List[int]) -> int:
    return arena.add(ProductNode(children=[arena.mixture(left), arena.mixture(right)]))


def _regions(arena: _Arena, vnode: Vtree, units: int, region: RegionFactory) -> List[int]:
    if vnode.is_leaf:
        return arena.leaves(vnode.var, units)
    left = _regions(arena, vnode.left, units, region)
    right = _regions(arena, vnode.right, units, region)
    return [region(arena, vnode, left, right) for _ in range(units)]


def _check_units(units: int):
    if units < 1:
        raise ArgumentError(f"Need at least one unit per region, got {units}")


def _arena(vtree: Vtree, num_vars: Optional[int], seed: int, data) -> Tuple[_Arena, int]:
    num_vars = len(vtree.variables()) if num_vars is None else num_vars
    vtree.validate(num_vars)
    if data is not None:
        data = np.asarray(data, dtype=float)
        if data.ndim != 2 or data.shape[1] != num_vars or data.shape[0] == 0:
            raise ArgumentError(f"Initialization data must be a non-empty N x {num_vars} matrix")
    return _Arena(np.random.Generator(np.random.Philox(seed)), data), num_vars


def build_baseline(vtree: Vtree, units: int, seed: int = 0, data: Optional[np.ndarray] = None) -> Circuit:
    """Smooth decomposable circuit with no gates."""
    _check_units(units)
    arena, num_vars = _arena(vtree, None, seed, data)
    root_regions = _regions(arena, vtree, units, _product_region)
    root = arena.mixture(root_regions)
    return Circuit(arena.nodes, root, num_vars)


def build_vt(vtree: Vtree, units: int, centroids: np.ndarray, seed: int = 0,
             data: Optional[np.ndarray] = None) -> Circuit:
    """Baseline layers under a root VT sum over all variables with one expert per centroid."""
    _check_units(units)
    arena, num_vars = _arena(vtree, None, seed, data)
    centroids = np.asarray(centroids, dtype=float)
    if centroids.ndim != 2 or centroids.shape[1] != num_vars or centroids.shape[0] < 1:
        raise ArgumentError(f"VT centroids must be a K x {num_vars} matrix with K >= 1")
    root_regions = _regions(arena, vtree, units, _product_region)
    experts = [arena.mixture(root_regions) for _ in range(centroids.shape[0])]
    k = len(experts)
    root = arena.add(VTSumNode(scope_vars=list(range(num_vars)), centroids=centroids,
                               log_mixture=np.full(k, -np.log(k)), experts=experts))
    return Circuit(arena.nodes, root, num_vars)


def build_hfv(vtree: Vtree, per_var_centroids: Sequence[Sequence[float]], units: int, seed: int = 0,
              joint_cap: int = DEFAULT_JOINT_CAP, data: Optional[np.ndarray] = None) -> Circuit:
    """
    HFV circuit: at every internal vtree node, HFV sums with a left and a
    right block. A block's gating chain is every variable below that side of
    the vtree node, so its cells are the grid of those variables' intervals.
    """
    _check_units(units)
    num_vars = len(vtree.variables())
    if num_vars < 2:
        raise ArgumentError("HFV circuits need at least two variables")
    if len(per_var_centroids) != num_vars:
        raise ArgumentError(f"Need one centroid list per variable, got {len(per_var_centroids)} for {num_vars}")
    centroids = []
    for var, values in enumerate(per_var_centroids):
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.size < 1:
            raise ArgumentError(f"Variable {var} needs at least one centroid")
        univariate_cells(values)
        centroids.append(values)
    arena, _ = _arena(vtree, num_vars, seed, data)

    def hfv_region(arena: _Arena, vnode: Vtree, left: List[int], right: List[int]) -> int:
        chains = [vnode.left.variables(), vnode.right.variables()]
        shape = [int(np.prod([centroids[v].size for v in chain])) for chain in chains]
        total = int(np.prod(shape))
        if total > joint_cap:
            raise StructureError(
                f"HFV node {arena.next_id} over {vnode} has {total} joint cells, cap is {joint_cap}",
                node_id=arena.next_id)
        blocks = []
        for chain, children, cells in zip(chains, (left, right), shape):
            experts = [arena.mixture(children) for _ in range(cells)]
            blocks.append(HFVBlock(variables=list(chain), centroids=[centroids[v].copy() for v in chain],
                                   experts=experts))
        return arena.add(HFVSumNode(blocks=blocks, log_joint_mixture=np.full(total, -np.log(total))))

    root_regions = _regions(arena, vtree, units, hfv_region)
    root = arena.mixture(root_regions)
    return Circuit(arena.nodes, root, num_vars)
