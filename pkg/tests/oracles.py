"""
Independent numerical oracles and small circuit factories shared by the tests.
"""

import itertools
from typing import List, Sequence

import numpy as np
from scipy.special import logsumexp, ndtr

from models.circuit import Circuit, ProductNode, SumNode, VTSumNode
from models.leaves import GaussianLeaf
from models.tessellation import Box
from inference.evaluator import HARD, eval_log_density_batch


# === Circuit factories ===

def factorized_gaussian(means=(0.0, 0.0), stddevs=(1.0, 1.0)) -> Circuit:
    leaves = [GaussianLeaf(var=i, mean=m, stddev=s) for i, (m, s) in enumerate(zip(means, stddevs))]
    return Circuit(leaves + [ProductNode(children=list(range(len(leaves))))], len(leaves), len(leaves))


def two_cell_vt(expert_means=((0.0, 0.0), (0.0, 0.0)), stddev=1.0, weights=(0.5, 0.5)) -> Circuit:
    """Root VT sum with centroids (0,1), (1,0) over two factorized Gaussian experts."""
    nodes = []
    experts = []
    for means in expert_means:
        first = len(nodes)
        nodes.append(GaussianLeaf(var=0, mean=means[0], stddev=stddev))
        nodes.append(GaussianLeaf(var=1, mean=means[1], stddev=stddev))
        nodes.append(ProductNode(children=[first, first + 1]))
        experts.append(len(nodes) - 1)
    nodes.append(VTSumNode(scope_vars=[0, 1], centroids=[[0.0, 1.0], [1.0, 0.0]],
                           log_mixture=np.log(np.asarray(weights, dtype=float)), experts=experts))
    return Circuit(nodes, len(nodes) - 1, 2)


def random_vt_2d(rng: np.random.Generator, k: int, mean_range=2.0, stddev_range=(0.5, 1.5)) -> Circuit:
    """Root VT sum over K factorized Gaussian experts with random centroids and mixture."""
    nodes = []
    experts = []
    for _ in range(k):
        first = len(nodes)
        for var in range(2):
            nodes.append(GaussianLeaf(var=var, mean=float(rng.uniform(-mean_range, mean_range)),
                                      stddev=float(rng.uniform(*stddev_range))))
        nodes.append(ProductNode(children=[first, first + 1]))
        experts.append(len(nodes) - 1)
    logw = np.log(rng.uniform(0.5, 1.5, k))
    nodes.append(VTSumNode(scope_vars=[0, 1], centroids=rng.uniform(-2.0, 2.0, size=(k, 2)),
                           log_mixture=logw - logsumexp(logw), experts=experts))
    return Circuit(nodes, len(nodes) - 1, 2)


def mixture_of_products(rng: np.random.Generator, components: int = 3, num_vars: int = 2) -> Circuit:
    nodes = []
    products = []
    for _ in range(components):
        first = len(nodes)
        for var in range(num_vars):
            nodes.append(GaussianLeaf(var=var, mean=float(rng.normal()), stddev=float(rng.uniform(0.5, 1.5))))
        nodes.append(ProductNode(children=list(range(first, first + num_vars))))
        products.append(len(nodes) - 1)
    logw = np.log(rng.uniform(0.5, 1.5, components))
    nodes.append(SumNode(children=products, log_weights=logw - logsumexp(logw)))
    return Circuit(nodes, len(nodes) - 1, num_vars)


# === Quadrature ===

def midpoint_grid_integral(circuit: Circuit, box: Box, resolution: int = 400) -> float:
    axes = [lo + (np.arange(resolution) + 0.5) * (hi - lo) / resolution for lo, hi in zip(box.lower, box.upper)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    values = np.exp(eval_log_density_batch(circuit, grid, HARD))
    return float(np.sum(values) * box.volume() / resolution ** len(axes))


def segment_nodes(breaks: Sequence[float], lower: float, upper: float, max_len: float, order: int):
    """Gauss-Legendre nodes and weights on [lower, upper], with segment edges at every break."""
    edges = sorted({lower, upper, *[b for b in breaks if lower < b < upper]})
    fine = []
    for a, b in zip(edges[:-1], edges[1:]):
        pieces = max(1, int(np.ceil((b - a) / max_len)))
        fine.extend(np.linspace(a, b, pieces + 1)[:-1])
    fine.append(upper)
    x, w = np.polynomial.legendre.leggauss(order)
    nodes = []
    weights = []
    for a, b in zip(fine[:-1], fine[1:]):
        nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def axis_aligned_integral(circuit: Circuit, breaks: List[Sequence[float]], half_width: float = 12.0,
                          max_len: float = 1.0, order: int = 16, chunk: int = 200_000) -> float:
    """
    Tensor Gauss-Legendre integral of the hard-gated density when every gate
    boundary is axis-aligned; ``breaks[i]`` lists the cut positions of variable i.
    """
    axes = [segment_nodes(b, -half_width, half_width, max_len, order) for b in breaks]
    points = np.stack(np.meshgrid(*[a[0] for a in axes], indexing="ij"), axis=-1).reshape(-1, len(axes))
    weights = np.ones(1)
    for _, w in axes:
        weights = np.multiply.outer(weights, w)
    weights = weights.reshape(-1)
    total = 0.0
    for start in range(0, len(points), chunk):
        values = np.exp(eval_log_density_batch(circuit, points[start:start + chunk], HARD))
        total += float(np.dot(values, weights[start:start + chunk]))
    return total


def vt_2d_partition(circuit: Circuit, half_width: float = 16.0, resolution: int = 20000) -> float:
    """
    Z of a root VT sum over factorized 2-D Gaussian experts. For each x1 the
    cell is an interval in x2, integrated in closed form; the outer integral
    over x1 uses the midpoint rule.
    """
    vt = circuit.nodes[circuit.root]
    ts = -half_width + (np.arange(resolution) + 0.5) * (2 * half_width / resolution)
    h = 2 * half_width / resolution
    total = 0.0
    for k, expert in enumerate(vt.experts):
        product = circuit.nodes[expert]
        leaves = {circuit.nodes[c].var: circuit.nodes[c] for c in product.children}
        ck = vt.centroids[k]
        y_lo = np.full(resolution, -np.inf)
        y_hi = np.full(resolution, np.inf)
        empty = np.zeros(resolution, dtype=bool)
        for j, cj in enumerate(vt.centroids):
            if j == k:
                continue
            normal = cj - ck
            offset = 0.5 * (np.dot(cj, cj) - np.dot(ck, ck))
            rest = offset - normal[0] * ts
            if normal[1] > 0:
                y_hi = np.minimum(y_hi, rest / normal[1])
            elif normal[1] < 0:
                y_lo = np.maximum(y_lo, rest / normal[1])
            else:
                empty |= rest < 0
        ly = leaves[1]
        mass_y = np.where(y_hi > y_lo, ndtr((y_hi - ly.mean) / ly.stddev) - ndtr((y_lo - ly.mean) / ly.stddev), 0.0)
        mass_y[empty] = 0.0
        density_x = leaves[0].density(ts)
        total += float(np.exp(vt.log_mixture[k]) * np.sum(density_x * mass_y) * h)
    return total


# === Geometry oracles ===

def box_corners(box: Box) -> np.ndarray:
    return np.array(list(itertools.product(*zip(box.lower, box.upper))))


def polygon_vertices_2d(halfspaces, box: Box) -> np.ndarray:
    """Vertices of {x in box : a.x <= b} by pairwise line intersection."""
    lines = [(np.asarray(s.normal, dtype=float), float(s.offset)) for s in halfspaces]
    for dim in range(2):
        e = np.zeros(2)
        e[dim] = 1.0
        lines.append((e, float(box.upper[dim])))
        lines.append((-e, -float(box.lower[dim])))
    vertices = []
    for (a1, b1), (a2, b2) in itertools.combinations(lines, 2):
        matrix = np.array([a1, a2])
        if abs(np.linalg.det(matrix)) < 1e-12:
            continue
        x = np.linalg.solve(matrix, np.array([b1, b2]))
        if all(np.dot(a, x) <= b + 1e-9 for a, b in lines):
            vertices.append(x)
    return np.array(vertices).reshape(-1, 2)
