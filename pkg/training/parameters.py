"""
Flat parameter vectors for circuits.

Every trainable quantity of a circuit gets a named slot in a
``ParameterLayout``; the optimizer works on the packed vector and
``unpack`` writes it back into a fresh circuit. Mixture weights are stored
as logits and renormalized with log-softmax on unpack, so they stay on
the simplex whatever the optimizer does. Leaf scales are stored as log
standard deviations and floored at ``STDDEV_FLOOR``.
"""

import sys
import os
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
from scipy.special import log_softmax

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.circuit import Circuit, HFVBlock, HFVSumNode, Node, ProductNode, SumNode, VTSumNode
from models.errors import ArgumentError
from models.leaves import GaussianLeaf

STDDEV_FLOOR = 1e-3

KIND_MEAN = "mean"
KIND_LOG_STDDEV = "log_stddev"
KIND_LOGITS = "logits"
KIND_CENTROIDS = "centroids"


@dataclass(frozen=True)
class ParameterSlot:
    path: str
    node_id: int
    kind: str
    shape: Tuple[int, ...]
    offset: int
    block: int = -1
    chain_pos: int = -1

    @property
    def size(self) -> int:
        return int(np.prod(self.shape)) if self.shape else 1


class ParameterLayout:
    """Slots for every reachable node, in ascending node id order."""

    def __init__(self, circuit: Circuit):
        self.num_nodes = len(circuit.nodes)
        self.slots: List[ParameterSlot] = []
        self._offset = 0
        for nid in sorted(circuit.topo_order):
            node = circuit.nodes[nid]
            if isinstance(node, GaussianLeaf):
                self._add(f"node[{nid}].mean", nid, KIND_MEAN, ())
                self._add(f"node[{nid}].log_stddev", nid, KIND_LOG_STDDEV, ())
            elif isinstance(node, SumNode):
                self._add(f"node[{nid}].log_weights", nid, KIND_LOGITS, node.log_weights.shape)
            elif isinstance(node, VTSumNode):
                self._add(f"node[{nid}].centroids", nid, KIND_CENTROIDS, node.centroids.shape)
                self._add(f"node[{nid}].log_mixture", nid, KIND_LOGITS, node.log_mixture.shape)
            elif isinstance(node, HFVSumNode):
                for b, block in enumerate(node.blocks):
                    for p, c in enumerate(block.centroids):
                        self._add(f"node[{nid}].block[{b}].centroids[{p}]", nid, KIND_CENTROIDS, c.shape,
                                  block=b, chain_pos=p)
                self._add(f"node[{nid}].log_joint_mixture", nid, KIND_LOGITS, node.log_joint_mixture.shape)
        self.by_path: Dict[str, ParameterSlot] = {s.path: s for s in self.slots}

    def _add(self, path: str, nid: int, kind: str, shape, block: int = -1, chain_pos: int = -1):
        slot = ParameterSlot(path, nid, kind, tuple(int(s) for s in shape), self._offset, block, chain_pos)
        self.slots.append(slot)
        self._offset += slot.size

    @property
    def size(self) -> int:
        return self._offset

    def slot_at(self, index: int) -> ParameterSlot:
        for slot in self.slots:
            if slot.offset <= index < slot.offset + slot.size:
                return slot
        raise ArgumentError(f"Parameter index {index} outside layout of size {self.size}")

    def pack(self, circuit: Circuit) -> np.ndarray:
        self._check(circuit)
        vector = np.zeros(self.size)
        for slot in self.slots:
            node = circuit.nodes[slot.node_id]
            vector[slot.offset:slot.offset + slot.size] = np.ravel(_read(node, slot))
        return vector

    def unpack(self, circuit: Circuit, vector: np.ndarray) -> Circuit:
        """Copy of ``circuit`` carrying the parameters in ``vector``."""
        self._check(circuit)
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (self.size,):
            raise ArgumentError(f"Parameter vector has shape {vector.shape}, layout needs ({self.size},)")
        nodes: List[Node] = [_copy_node(node) for node in circuit.nodes]
        for slot in self.slots:
            _write(nodes[slot.node_id], slot, vector[slot.offset:slot.offset + slot.size].reshape(slot.shape))
        return Circuit(nodes, circuit.root, circuit.num_vars)

    def _check(self, circuit: Circuit):
        if len(circuit.nodes) != self.num_nodes:
            raise ArgumentError("Circuit does not match this parameter layout")


def _read(node: Node, slot: ParameterSlot):
    if slot.kind == KIND_MEAN:
        return node.mean
    if slot.kind == KIND_LOG_STDDEV:
        return np.log(node.stddev)
    if isinstance(node, SumNode):
        return node.log_weights
    if isinstance(node, VTSumNode):
        return node.centroids if slot.kind == KIND_CENTROIDS else node.log_mixture
    if slot.kind == KIND_CENTROIDS:
        return node.blocks[slot.block].centroids[slot.chain_pos]
    return node.log_joint_mixture


def _write(node: Node, slot: ParameterSlot, value: np.ndarray):
    if slot.kind == KIND_MEAN:
        node.mean = float(value)
    elif slot.kind == KIND_LOG_STDDEV:
        node.stddev = float(max(np.exp(float(value)), STDDEV_FLOOR))
    elif isinstance(node, SumNode):
        node.log_weights = log_softmax(value)
    elif isinstance(node, VTSumNode):
        if slot.kind == KIND_CENTROIDS:
            node.centroids = value.copy()
        else:
            node.log_mixture = log_softmax(value)
    elif slot.kind == KIND_CENTROIDS:
        node.blocks[slot.block].centroids[slot.chain_pos] = value.copy()
    else:
        node.log_joint_mixture = log_softmax(value)


def _copy_node(node: Node) -> Node:
    if isinstance(node, GaussianLeaf):
        return GaussianLeaf(var=node.var, mean=node.mean, stddev=node.stddev)
    if isinstance(node, ProductNode):
        return ProductNode(children=list(node.children))
    if isinstance(node, SumNode):
        return SumNode(children=list(node.children), log_weights=node.log_weights.copy())
    if isinstance(node, VTSumNode):
        return VTSumNode(scope_vars=list(node.scope_vars), centroids=node.centroids.copy(),
                         log_mixture=node.log_mixture.copy(), experts=list(node.experts))
    return HFVSumNode(
        blocks=[HFVBlock(variables=list(b.variables), centroids=[c.copy() for c in b.centroids],
                         experts=list(b.experts)) for b in node.blocks],
        log_joint_mixture=node.log_joint_mixture.copy())
