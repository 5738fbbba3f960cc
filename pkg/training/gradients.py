"""
Reverse-mode gradients of the batch mean negative log-likelihood under
soft gating.

The forward pass stores the log-value of every node. The backward pass
walks the nodes parents-first and carries, per point, the adjoint
dL/dv_n of each node's log-value:

  product   children receive the adjoint unchanged
  sum       child c receives adjoint * r_c, r_c = w_c f_c / f
  VT sum    expert k receives adjoint * r_k with r_k = w_k(u) pi_k f_k / f;
            centroid j gets 2 alpha (u - c_j) (r_j - w_j(u)) per point
  HFV sum   block expert of cell c receives the block-marginal of the joint
            responsibilities; each chain variable's centroids get the same
            formula as a VT gate, with that variable's marginal
            responsibilities in place of r

Logit gradients go through log-softmax: g - softmax * sum(g).
"""

import sys
import os
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.circuit import Circuit, HFVSumNode, ProductNode, SumNode, VTSumNode
from models.errors import ArgumentError, NumericError
from models.leaves import GaussianLeaf
from inference.evaluator import GatingMode, block_log_soft_gates, eval_log_density, forward_log_values
from training.parameters import (KIND_CENTROIDS, KIND_LOG_STDDEV, KIND_LOGITS, KIND_MEAN,
                                 ParameterLayout)
from training.soft_gates import log_soft_weights, log_univariate_soft_weights


def soft_log_density(circuit: Circuit, x, alpha: float) -> float:
    """log f(x; alpha) with every gate softened at inverse temperature alpha."""
    return eval_log_density(circuit, x, GatingMode.soft(alpha))


@dataclass
class GradientBundle:
    """Mean NLL of a batch and its gradient, keyed by parameter path."""

    nll: float
    grads: Dict[str, np.ndarray] = field(default_factory=dict)
    kinds: Dict[str, str] = field(default_factory=dict)

    def of_kind(self, kind: str) -> Dict[str, np.ndarray]:
        return {path: g for path, g in self.grads.items() if self.kinds[path] == kind}

    @property
    def centroids(self) -> Dict[str, np.ndarray]:
        return self.of_kind(KIND_CENTROIDS)

    @property
    def logits(self) -> Dict[str, np.ndarray]:
        return self.of_kind(KIND_LOGITS)

    @property
    def leaf_means(self) -> Dict[str, np.ndarray]:
        return self.of_kind(KIND_MEAN)

    @property
    def leaf_log_stddevs(self) -> Dict[str, np.ndarray]:
        return self.of_kind(KIND_LOG_STDDEV)

    def to_vector(self, layout: ParameterLayout) -> np.ndarray:
        vector = np.zeros(layout.size)
        for slot in layout.slots:
            vector[slot.offset:slot.offset + slot.size] = np.ravel(self.grads[slot.path])
        return vector


def _responsibilities(terms: np.ndarray, total: np.ndarray) -> np.ndarray:
    """exp(terms - total) with rows of zero density mapped to zero."""
    finite = np.isfinite(total)
    shifted = np.where(finite, total, 0.0)
    out = np.exp(terms - shifted.reshape((-1,) + (1,) * (terms.ndim - 1)))
    return np.where(finite.reshape((-1,) + (1,) * (terms.ndim - 1)), out, 0.0)


def _logit_gradient(g: np.ndarray, log_weights: np.ndarray) -> np.ndarray:
    return g - np.exp(log_weights) * np.sum(g)


def _centroid_gradient(delta: np.ndarray, points: np.ndarray, centroids: np.ndarray,
                       resp: np.ndarray, gates: np.ndarray, alpha: float) -> np.ndarray:
    """sum_n delta_n 2 alpha (u_n - c_j) (resp_nj - gates_nj), shape (K, d)."""
    coeff = 2.0 * alpha * delta[:, None] * (resp - gates)
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nk,nkd->kd", coeff, diff)


def backward(circuit: Circuit, X: np.ndarray, alpha: float, layout: ParameterLayout = None) -> GradientBundle:
    """Gradient of -mean_n log f(x_n; alpha) with respect to every parameter in the layout."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ArgumentError("Backward pass needs a non-empty N x D batch")
    layout = layout or ParameterLayout(circuit)
    mode = GatingMode.soft(alpha)
    values = forward_log_values(circuit, X, mode)
    n = X.shape[0]
    root_values = values[circuit.root]
    nll = float(-np.mean(root_values))

    adjoint: Dict[int, np.ndarray] = {nid: np.zeros(n) for nid in circuit.topo_order}
    adjoint[circuit.root] = np.full(n, -1.0 / n)
    grads: Dict[str, np.ndarray] = {}

    for nid in reversed(circuit.topo_order):
        node = circuit.nodes[nid]
        delta = adjoint[nid]
        v = values[nid]
        if isinstance(node, GaussianLeaf):
            dmean, dlogstd = node.grad_log_density(X[:, node.var])
            grads[f"node[{nid}].mean"] = np.asarray(np.dot(delta, dmean))
            grads[f"node[{nid}].log_stddev"] = np.asarray(np.dot(delta, dlogstd))
        elif isinstance(node, ProductNode):
            for child in node.children:
                adjoint[child] += delta
        elif isinstance(node, SumNode):
            terms = np.stack([values[c] for c in node.children], axis=1) + node.log_weights[None, :]
            resp = _responsibilities(terms, v)
            for i, child in enumerate(node.children):
                adjoint[child] += delta * resp[:, i]
            grads[f"node[{nid}].log_weights"] = _logit_gradient(delta @ resp, node.log_weights)
        elif isinstance(node, VTSumNode):
            points = X[:, node.scope_vars]
            log_gates = log_soft_weights(points, node.centroids, alpha)
            experts = np.stack([values[e] for e in node.experts], axis=1)
            resp = _responsibilities(log_gates + node.log_mixture[None, :] + experts, v)
            for k, expert in enumerate(node.experts):
                adjoint[expert] += delta * resp[:, k]
            grads[f"node[{nid}].log_mixture"] = _logit_gradient(delta @ resp, node.log_mixture)
            grads[f"node[{nid}].centroids"] = _centroid_gradient(
                delta, points, node.centroids, resp, np.exp(log_gates), alpha)
        elif isinstance(node, HFVSumNode):
            _hfv_backward(nid, node, X, values, delta, alpha, adjoint, grads)
        else:
            raise ArgumentError(f"Unknown node type {type(node).__name__} at {nid}")

    kinds = {}
    for slot in layout.slots:
        g = grads.get(slot.path)
        if g is None:
            g = np.zeros(slot.shape)
            grads[slot.path] = g
        if not np.all(np.isfinite(g)):
            raise NumericError(f"Non-finite gradient for {slot.path}", node_id=slot.node_id,
                               parameter=slot.path)
        kinds[slot.path] = slot.kind
    return GradientBundle(nll=nll, grads=grads, kinds=kinds)


def _hfv_backward(nid: int, node: HFVSumNode, X: np.ndarray, values: Dict[int, np.ndarray],
                  delta: np.ndarray, alpha: float, adjoint: Dict[int, np.ndarray],
                  grads: Dict[str, np.ndarray]):
    n = X.shape[0]
    m = len(node.blocks)
    total = np.broadcast_to(node.log_joint_mixture.reshape((1,) + node.joint_shape),
                            (n,) + node.joint_shape).copy()
    for i, block in enumerate(node.blocks):
        term = block_log_soft_gates(block, X[:, block.variables], alpha)
        term = term + np.stack([values[e] for e in block.experts], axis=1)
        shape = [n] + [1] * m
        shape[i + 1] = block.num_cells
        total = total + term.reshape(shape)
    resp = _responsibilities(total, values[nid])

    joint = resp.reshape(n, -1)
    grads[f"node[{nid}].log_joint_mixture"] = _logit_gradient(delta @ joint, node.log_joint_mixture)

    for i, block in enumerate(node.blocks):
        other_axes = tuple(a + 1 for a in range(m) if a != i)
        block_resp = resp.sum(axis=other_axes) if other_axes else resp
        for cell, expert in enumerate(block.experts):
            adjoint[expert] += delta * block_resp[:, cell]
        per_var = block_resp.reshape((n,) + block.cell_shape)
        chain_axes = list(range(1, len(block.variables) + 1))
        for p, (var, centroids) in enumerate(zip(block.variables, block.centroids)):
            axes = tuple(a for a in chain_axes if a != p + 1)
            var_resp = per_var.sum(axis=axes) if axes else per_var
            values_p = X[:, [var]]
            gates = np.exp(log_univariate_soft_weights(X[:, var], centroids, alpha))
            grads[f"node[{nid}].block[{i}].centroids[{p}]"] = _centroid_gradient(
                delta, values_p, centroids.reshape(-1, 1), var_resp, gates, alpha).reshape(-1)


def numeric_gradient(circuit: Circuit, X: np.ndarray, alpha: float, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of the mean NLL over the packed parameter vector."""
    layout = ParameterLayout(circuit)
    theta = layout.pack(circuit)
    mode = GatingMode.soft(alpha)
    out = np.zeros_like(theta)
    for i in range(theta.size):
        plus = theta.copy()
        minus = theta.copy()
        plus[i] += step
        minus[i] -= step
        f_plus = -np.mean(forward_log_values(layout.unpack(circuit, plus), X, mode)[circuit.root])
        f_minus = -np.mean(forward_log_values(layout.unpack(circuit, minus), X, mode)[circuit.root])
        out[i] = (f_plus - f_minus) / (2.0 * step)
    return out
