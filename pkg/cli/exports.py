"""
Plot-ready exports for two-variable models: density grids and the
tessellation overlay (clipped cell polygons, boundary segments, centroids,
inner/outer boxes, and the axis-aligned cuts of HFV gates).
"""

import csv
import json
import sys
import os
from typing import Dict, List, Optional, Sequence

import numpy as np

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.circuit import Circuit, HFVSumNode, VTSumNode
from models.errors import ArgumentError
from models.tessellation import Box, Tessellation
from geometry.cells import inner_box, outer_box
from inference.bounds import as_domain_box
from inference.evaluator import GatingMode, eval_log_density_batch

EDGE_TOLERANCE = 1e-9

Point = List[float]


def _require_2d(circuit: Circuit, what: str):
    if circuit.num_vars != 2:
        raise ArgumentError(f"{what} export supports two-variable models only; this one has {circuit.num_vars}")


# === Density grid ===

def density_grid(circuit: Circuit, domain, resolution: int, mode: GatingMode) -> np.ndarray:
    """(resolution^2, 3) rows of x1, x2, log f over an evenly spaced grid spanning the domain."""
    _require_2d(circuit, "Grid")
    if resolution < 2:
        raise ArgumentError(f"Grid resolution must be at least 2, got {resolution}")
    box = as_domain_box(domain, 2)
    xs = np.linspace(box.lower[0], box.upper[0], resolution)
    ys = np.linspace(box.lower[1], box.upper[1], resolution)
    points = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
    return np.column_stack([points, eval_log_density_batch(circuit, points, mode)])


def write_density_grid(path: str, grid: np.ndarray):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["x1", "x2", "log_density"])
        for x1, x2, value in grid:
            writer.writerow([repr(float(x1)), repr(float(x2)), repr(float(value))])


# === Polygon clipping ===

def clip_polygon(polygon: List[np.ndarray], normal: np.ndarray, offset: float) -> List[np.ndarray]:
    """Sutherland-Hodgman: the part of a convex polygon with normal . x <= offset."""
    if not polygon:
        return []
    out: List[np.ndarray] = []
    count = len(polygon)
    for i in range(count):
        current = polygon[i]
        following = polygon[(i + 1) % count]
        s_cur = float(np.dot(normal, current)) - offset
        s_next = float(np.dot(normal, following)) - offset
        if s_cur <= 0.0:
            out.append(current)
        if (s_cur < 0.0 < s_next) or (s_next < 0.0 < s_cur):
            t = s_cur / (s_cur - s_next)
            out.append(current + t * (following - current))
    return out


def box_polygon(box: Box) -> List[np.ndarray]:
    (x0, y0), (x1, y1) = box.lower, box.upper
    return [np.array([x0, y0]), np.array([x1, y0]), np.array([x1, y1]), np.array([x0, y1])]


def cell_polygon(tess: Tessellation, k: int, domain: Box) -> List[np.ndarray]:
    polygon = box_polygon(domain)
    for space in tess.halfspaces(k):
        polygon = clip_polygon(polygon, space.normal, space.offset)
    return polygon


def _neighbour_of_edge(tess: Tessellation, k: int, a: np.ndarray, b: np.ndarray) -> Optional[int]:
    others = [j for j in range(tess.num_cells) if j != k]
    for j, space in zip(others, tess.halfspaces(k)):
        scale = EDGE_TOLERANCE * (1.0 + float(np.abs(space.offset)))
        if (abs(float(np.dot(space.normal, a)) - space.offset) <= scale
                and abs(float(np.dot(space.normal, b)) - space.offset) <= scale):
            return j
    return None


def _points(polygon: Sequence[np.ndarray]) -> List[Point]:
    return [[float(p[0]), float(p[1])] for p in polygon]


# === Overlay ===

def vt_overlay(nid: int, node: VTSumNode, domain: Box) -> Dict:
    tess = node.tessellation()
    cells = []
    boundaries = []
    for k in range(tess.num_cells):
        polygon = cell_polygon(tess, k, domain)
        cells.append({
            "cell": k,
            "polygon": _points(polygon),
            "inner_box": inner_box(tess, k, domain).to_dict(),
            "outer_box": outer_box(tess, k, domain).to_dict(),
        })
        for i in range(len(polygon)):
            a, b = polygon[i], polygon[(i + 1) % len(polygon)]
            j = _neighbour_of_edge(tess, k, a, b)
            if j is not None and j > k and np.linalg.norm(a - b) > 0.0:
                boundaries.append({"cells": [k, j], "points": _points([a, b])})
    return {
        "node": nid,
        "scope_vars": list(node.scope_vars),
        "centroids": [[float(v) for v in row] for row in node.centroids],
        "cells": cells,
        "boundaries": boundaries,
    }


def _cut_segments(var: int, centroids: np.ndarray, domain: Box) -> List[Dict]:
    ordered = np.sort(np.asarray(centroids, dtype=float))
    cuts = []
    other = 1 - var
    for value in 0.5 * (ordered[:-1] + ordered[1:]):
        if not domain.lower[var] <= value <= domain.upper[var]:
            continue
        a = [0.0, 0.0]
        b = [0.0, 0.0]
        a[var] = b[var] = float(value)
        a[other] = float(domain.lower[other])
        b[other] = float(domain.upper[other])
        cuts.append({"var": var, "value": float(value), "points": [a, b]})
    return cuts


def hfv_overlay(nid: int, node: HFVSumNode, domain: Box) -> Dict:
    cuts = []
    for block in node.blocks:
        for var, centroids in zip(block.variables, block.centroids):
            cuts.extend(_cut_segments(var, centroids, domain))
    return {"node": nid, "cuts": cuts}


def tessellation_overlay(circuit: Circuit, domain) -> Dict:
    _require_2d(circuit, "Tessellation")
    box = as_domain_box(domain, 2)
    vt = []
    cuts = []
    for nid in circuit.vt_nodes():
        node = circuit.nodes[nid]
        if len(node.scope_vars) == 2:
            vt.append(vt_overlay(nid, node, box))
        else:
            cuts.append({"node": nid, "cuts": _cut_segments(node.scope_vars[0], node.centroids[:, 0], box)})
    hfv = [hfv_overlay(nid, circuit.nodes[nid], box) for nid in circuit.hfv_nodes()]
    return {"domain": box.to_dict(), "vt_nodes": vt, "hfv_nodes": hfv + cuts}


def write_overlay(path: str, overlay: Dict):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(overlay, handle, indent=1, sort_keys=True)
        handle.write("\n")


def load_overlay(path: str) -> Dict:
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def verify_inner_boxes(overlay: Dict, tolerance: float = 1e-9) -> List[str]:
    """Re-check that every stored inner box lies inside its cell; returns the failures."""
    failures = []
    for entry in overlay.get("vt_nodes", []):
        tess = Tessellation(np.array(entry["centroids"], dtype=float))
        for cell in entry["cells"]:
            box = Box.from_dict(cell["inner_box"])
            if box.is_empty:
                continue
            for space in tess.halfspaces(cell["cell"]):
                pos = np.maximum(space.normal, 0.0)
                neg = np.minimum(space.normal, 0.0)
                highest = float(pos @ box.upper + neg @ box.lower)
                if highest > space.offset + tolerance * (1.0 + abs(space.offset)):
                    failures.append(f"node {entry['node']} cell {cell['cell']}: inner box leaves the cell")
                    break
    return failures
