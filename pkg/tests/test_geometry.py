import math

import numpy as np
import pytest
from scipy.optimize import linprog

from models.errors import ArgumentError, GeometryError
from models.tessellation import Box, CellLabel, HalfSpace, Tessellation, closest_centroid_pair
from geometry.cells import (bisect_box, cell_contains, cell_halfspaces, classify_box, inner_box, nearest_cells,
                            nearest_centroid, outer_box, univariate_cell_of, univariate_cells)
from geometry.lp_solver import LPStatus, lp_extremum
from tests.oracles import box_corners, polygon_vertices_2d

# === HELPERS ===

@pytest.fixture
def diagonal():
    return Tessellation([[0.0, 1.0], [1.0, 0.0]])


def random_tessellation(rng, k, d):
    return Tessellation(rng.uniform(-2.0, 2.0, size=(k, d)))


def sample_cell(rng, tess, k, domain, count):
    """Rejection samples from cell k intersected with the domain."""
    found = []
    while sum(len(f) for f in found) < count:
        batch = domain.sample_uniform(rng, 4 * count)
        sq = ((batch[:, None, :] - tess.centroids[None, :, :]) ** 2).sum(axis=2)
        found.append(batch[np.argmin(sq, axis=1) == k])
    return np.concatenate(found)[:count]


# === HALF-SPACES AND MEMBERSHIP ===

def test_diagonal_cell_halfspace(diagonal):
    spaces = cell_halfspaces(diagonal, 0)
    assert len(spaces) == 1
    assert np.allclose(spaces[0].normal, [1.0, -1.0])
    assert spaces[0].offset == 0.0

def test_single_cell_has_no_constraints():
    assert cell_halfspaces(Tessellation([[0.3, 0.4]]), 0) == []

def test_line_cell_halfspace():
    tess = Tessellation([0.0, 2.0])
    (space,) = cell_halfspaces(tess, 0)
    assert np.allclose(space.normal, [2.0])
    assert space.offset == 2.0
    assert cell_contains(tess, [0.99], 0) and not cell_contains(tess, [1.01], 0)

def test_duplicate_centroids_rejected():
    with pytest.raises(GeometryError):
        Tessellation([[0.0, 0.0], [0.0, 1e-12]])

def test_closest_centroid_pair():
    assert closest_centroid_pair(np.array([[0.0, 0.0]])) is None
    i, j, dist = closest_centroid_pair(np.array([[0.0, 0.0], [5.0, 0.0], [5.0, 0.5]]))
    assert (i, j) == (1, 2)
    assert dist == pytest.approx(0.5)

def test_zero_normal_rejected():
    with pytest.raises(GeometryError):
        HalfSpace(normal=np.zeros(2), offset=1.0)

def test_nearest_centroid_margin():
    margin = nearest_centroid(Tessellation([[0.0, 0.0], [2.0, 0.0]]), [0.4, 0.0])
    assert margin.nearest_cell == 0
    assert margin.gamma == pytest.approx(1.6 ** 2 - 0.4 ** 2, abs=1e-12)

def test_margin_on_boundary_is_zero(diagonal):
    margin = nearest_centroid(diagonal, [0.5, 0.5])
    assert margin.nearest_cell == 0
    assert margin.gamma == 0.0

def test_single_cell_margin_is_infinite():
    assert nearest_centroid(Tessellation([[1.0]]), [5.0]).gamma == math.inf

def test_membership_agrees_with_nearest_centroid():
    rng = np.random.Generator(np.random.Philox(1))
    for d in (2, 3):
        tess = random_tessellation(rng, 5, d)
        for u in rng.uniform(-4.0, 4.0, size=(2000, d)):
            k = nearest_centroid(tess, u).nearest_cell
            assert cell_contains(tess, u, k)
            assert not any(cell_contains(tess, u, j) for j in range(tess.num_cells) if j != k)

def test_hard_gate_on_shared_face_goes_to_lower_cell(diagonal):
    points = np.array([[t, t] for t in np.linspace(-3.0, 3.0, 13)])
    assert nearest_cells(points, diagonal.centroids).tolist() == [0] * 13
    for u in points:
        assert cell_contains(diagonal, u, 0) and cell_contains(diagonal, u, 1)

def test_hard_gate_corner_ties():
    square = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]])
    points = np.array([[1.0, 1.0], [1.0, 0.0], [2.0, 1.0], [1.0, 2.0], [0.0, 1.0]])
    assert nearest_cells(points, square).tolist() == [0, 0, 1, 2, 0]

def test_hard_gate_is_lowest_containing_cell():
    rng = np.random.Generator(np.random.Philox(4))
    grid = np.array([[a, b] for a in range(-3, 4) for b in range(-3, 4)], dtype=float)
    points = np.array([[a, b] for a in np.arange(-4.0, 4.5, 0.5) for b in np.arange(-4.0, 4.5, 0.5)])
    for _ in range(20):
        tess = Tessellation(grid[rng.choice(len(grid), size=5, replace=False)])
        cells = nearest_cells(points, tess.centroids)
        sq = ((points[:, None, :] - tess.centroids[None, :, :]) ** 2).sum(axis=2)
        assert cells.tolist() == np.argmin(sq, axis=1).tolist()
        for u, k in zip(points, cells):
            assert cell_contains(tess, u, k)
            assert not any(cell_contains(tess, u, j) for j in range(k))


# === BOX CLASSIFICATION ===

def test_box_straddling_diagonal_is_boundary(diagonal):
    assert classify_box(Box([-1, -1], [-0.5, -0.5]), cell_halfspaces(diagonal, 0)) == CellLabel.BOUNDARY

def test_box_above_diagonal_is_inside(diagonal):
    assert classify_box(Box([0, 0.8], [0.2, 1.0]), cell_halfspaces(diagonal, 0)) == CellLabel.INSIDE

def test_box_below_diagonal_is_outside(diagonal):
    assert classify_box(Box([0.8, 0], [1.0, 0.2]), cell_halfspaces(diagonal, 0)) == CellLabel.OUTSIDE

def test_classification_matches_corner_oracle():
    rng = np.random.Generator(np.random.Philox(2))
    for _ in range(300):
        d = int(rng.integers(1, 5))
        tess = random_tessellation(rng, int(rng.integers(2, 6)), d)
        lower = rng.uniform(-3.0, 2.0, d)
        box = Box(lower, lower + rng.uniform(0.05, 1.5, d))
        corners = box_corners(box)
        for k in range(tess.num_cells):
            spaces = tess.halfspaces(k)
            values = np.array([[np.dot(s.normal, c) - s.offset for s in spaces] for c in corners])
            if np.all(values <= 0.0):
                expected = CellLabel.INSIDE
            elif np.any(np.all(values > 0.0, axis=0)):
                expected = CellLabel.OUTSIDE
            else:
                expected = CellLabel.BOUNDARY
            assert classify_box(box, spaces) == expected


# === INNER AND OUTER BOXES ===

def test_inner_box_radius():
    tess = Tessellation([[0.0, 0.0], [2.0, 0.0]])
    box = inner_box(tess, 0, Box([-5, -5], [5, 5]))
    r = 2.0 / (2.0 * math.sqrt(2.0))
    assert np.allclose(box.lower, [-r, -r]) and np.allclose(box.upper, [r, r])

def test_inner_box_single_cell_is_domain():
    domain = Box([0, 0], [1, 1])
    assert inner_box(Tessellation([[3.0, 3.0]]), 0, domain) == domain

def test_inner_box_centroid_outside_domain_is_empty():
    tess = Tessellation([[5.0, 5.0], [6.0, 5.0]])
    assert inner_box(tess, 0, Box([0, 0], [1, 1])).is_empty

def test_outer_box_diagonal(diagonal):
    box = outer_box(diagonal, 0, Box([0, 0], [1, 1]))
    assert np.allclose(box.lower, [0, 0], atol=1e-8) and np.allclose(box.upper, [1, 1], atol=1e-8)

def test_outer_box_single_cell_is_domain():
    domain = Box([0, 0], [1, 1])
    assert outer_box(Tessellation([[0.5, 0.5]]), 0, domain) == domain

def test_outer_box_cell_missing_domain_is_empty():
    tess = Tessellation([[0.0], [10.0]])
    assert outer_box(tess, 1, Box([-1], [1])).is_empty

def test_box_soundness_by_sampling():
    rng = np.random.Generator(np.random.Philox(3))
    for _ in range(20):
        d = int(rng.integers(2, 5))
        tess = random_tessellation(rng, int(rng.integers(2, 6)), d)
        domain = Box(np.full(d, -3.0), np.full(d, 3.0))
        for k in range(tess.num_cells):
            inner = inner_box(tess, k, domain)
            if not inner.is_empty:
                points = inner.sample_uniform(rng, 500)
                sq = ((points[:, None, :] - tess.centroids[None, :, :]) ** 2).sum(axis=2)
                assert np.all(np.argmin(sq, axis=1) == k)
            outer = outer_box(tess, k, domain)
            points = sample_cell(rng, tess, k, domain, 200)
            assert all(outer.contains_point(p) for p in points)


# === UNIVARIATE CELLS ===

def test_univariate_cells_midpoints():
    assert univariate_cells([0.0, 1.0, 2.0]) == [(-math.inf, 0.5), (0.5, 1.5), (1.5, math.inf)]
    assert univariate_cells([4.0]) == [(-math.inf, math.inf)]
    assert univariate_cells([-1.0, 1.0]) == [(-math.inf, 0.0), (0.0, math.inf)]

def test_univariate_cells_reject_unsorted():
    with pytest.raises(ArgumentError):
        univariate_cells([1.0, 0.0])

def test_midpoint_value_goes_to_smaller_centroid():
    assert list(univariate_cell_of([2.0, 0.0], [1.0, 1.0001, -3.0])) == [1, 0, 1]


# === BISECTION ===

def test_bisect_longer_side():
    left, right = bisect_box(Box([0, 0], [1, 4]), 1)
    assert left == Box([0, 0], [1, 2]) and right == Box([0, 2], [1, 4])

def test_bisect_unit_box():
    left, right = bisect_box(Box([0, 0], [1, 1]), 0)
    assert left.upper[0] == 0.5 and right.lower[0] == 0.5

def test_bisect_degenerate_dimension_rejected():
    with pytest.raises(ArgumentError):
        bisect_box(Box([0, 1], [1, 1]), 1)

def test_bisect_unbounded_dimension_rejected():
    with pytest.raises(ArgumentError):
        bisect_box(Box([0, -math.inf], [1, 0]), 1)


# === LINEAR PROGRAMS ===

def test_lp_box_only():
    assert lp_extremum([], Box([0, 0], [1, 1]), 0).value == pytest.approx(1.0)

def test_lp_diagonal_max(diagonal):
    result = lp_extremum(cell_halfspaces(diagonal, 0), Box([0, 0], [1, 1]), 0, maximize=True)
    assert result.value == pytest.approx(1.0, abs=1e-12)

def test_lp_infeasible():
    space = HalfSpace(normal=np.array([1.0, 0.0]), offset=-1.0)
    assert lp_extremum([space], Box([0, 0], [1, 1]), 0).status == LPStatus.INFEASIBLE

def test_lp_matches_vertex_enumeration_and_linprog():
    rng = np.random.Generator(np.random.Philox(4))
    checked = 0
    for _ in range(200):
        tess = random_tessellation(rng, int(rng.integers(2, 6)), 2)
        domain = Box([-3, -3], [3, 3])
        k = int(rng.integers(0, tess.num_cells))
        spaces = tess.halfspaces(k)
        vertices = polygon_vertices_2d(spaces, domain)
        a_ub = np.array([s.normal for s in spaces])
        b_ub = np.array([s.offset for s in spaces])
        for dim in range(2):
            for maximize in (True, False):
                result = lp_extremum(spaces, domain, dim, maximize=maximize)
                if len(vertices) == 0:
                    assert result.status == LPStatus.INFEASIBLE
                    continue
                expected = vertices[:, dim].max() if maximize else vertices[:, dim].min()
                assert result.value == pytest.approx(expected, abs=1e-8)
                c = np.zeros(2)
                c[dim] = -1.0 if maximize else 1.0
                reference = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=[(-3, 3), (-3, 3)], method="highs")
                assert result.value == pytest.approx(-reference.fun if maximize else reference.fun, abs=1e-7)
                checked += 1
    assert checked > 0
