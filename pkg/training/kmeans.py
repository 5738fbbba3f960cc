"""
Centroid initialization: Lloyd's algorithm with k-means++ seeding.
"""

import sys
import os
from typing import List

import numpy as np

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.errors import ArgumentError
from models.tessellation import Tessellation
from geometry.cells import squared_distances


def kmeans_plusplus(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = data.shape[0]
    centroids = np.empty((k, data.shape[1]))
    centroids[0] = data[rng.integers(0, n)]
    closest = squared_distances(data, centroids[:1])[:, 0]
    for i in range(1, k):
        total = closest.sum()
        if total > 0.0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(0, n)
        centroids[i] = data[idx]
        closest = np.minimum(closest, squared_distances(data, centroids[i:i + 1])[:, 0])
    return centroids


def kmeans_init(data: np.ndarray, k: int, iters: int = 100, seed: int = 0) -> np.ndarray:
    """
    K x d centroids. Empty clusters are re-seeded at the point farthest
    from its nearest centroid. The result is checked as a tessellation, so
    coincident centroids raise GeometryError here rather than at build time.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data.reshape(-1, 1)
    if k < 1:
        raise ArgumentError(f"Need at least one cluster, got {k}")
    if data.shape[0] < k:
        raise ArgumentError(f"Need at least {k} points for {k} clusters, got {data.shape[0]}")
    rng = np.random.Generator(np.random.Philox(seed))
    centroids = kmeans_plusplus(data, k, rng)
    labels = None
    for _ in range(iters):
        dist = squared_distances(data, centroids)
        new_labels = np.argmin(dist, axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = labels == j
            if np.any(members):
                centroids[j] = data[members].mean(axis=0)
            else:
                far = int(np.argmax(squared_distances(data, centroids).min(axis=1)))
                centroids[j] = data[far]
                labels[far] = j
    Tessellation(centroids)
    return centroids


def per_variable_centroids(data: np.ndarray, k: int, iters: int = 100, seed: int = 0) -> List[np.ndarray]:
    """Sorted one-dimensional k-means centroids for every column."""
    data = np.asarray(data, dtype=float)
    return [np.sort(kmeans_init(data[:, [var]], k, iters, seed + var)[:, 0]) for var in range(data.shape[1])]
