"""
Small dense simplex solver for extremizing one coordinate over a polytope.

The polytopes met here are a Voronoi cell clipped to a bounded box: at most
K-1 half-spaces plus 2d box bounds. Problems that small are solved with a
two-phase tableau method using Bland's rule, which cannot cycle.
"""

import sys
import os
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.errors import ArgumentError, LPSolverError
from models.tessellation import Box, HalfSpace

PIVOT_TOL = 1e-12
FEASIBILITY_TOL = 1e-9
DEFAULT_MAX_ITERS = 5000


class LPStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"


@dataclass
class LPResult:
    status: LPStatus
    value: Optional[float] = None
    point: Optional[np.ndarray] = None
    iterations: int = 0

    @property
    def is_feasible(self) -> bool:
        return self.status == LPStatus.OPTIMAL


def _pivot(tableau: np.ndarray, row: int, col: int):
    tableau[row] /= tableau[row, col]
    for r in range(tableau.shape[0]):
        if r != row and tableau[r, col] != 0.0:
            tableau[r] -= tableau[r, col] * tableau[row]


def _run_simplex(tableau: np.ndarray, basis: List[int], allowed: int, max_iters: int) -> int:
    """
    Maximize in place. The last row holds reduced costs (negative means the
    column improves the objective); the last column holds the right-hand side.
    Only the first ``allowed`` columns may enter the basis.
    """
    iterations = 0
    rows = tableau.shape[0] - 1
    while True:
        entering = -1
        for j in range(allowed):
            if tableau[-1, j] < -PIVOT_TOL:
                entering = j
                break
        if entering < 0:
            return iterations
        if iterations >= max_iters:
            raise LPSolverError(f"Simplex exceeded {max_iters} iterations")

        leaving = -1
        best_ratio = np.inf
        for r in range(rows):
            coef = tableau[r, entering]
            if coef > PIVOT_TOL:
                ratio = tableau[r, -1] / coef
                if ratio < best_ratio - PIVOT_TOL or (
                        abs(ratio - best_ratio) <= PIVOT_TOL and basis[r] < basis[leaving]):
                    best_ratio = ratio
                    leaving = r
        if leaving < 0:
            raise LPSolverError("Linear program is unbounded")

        _pivot(tableau, leaving, entering)
        basis[leaving] = entering
        iterations += 1


def solve_lp(objective: np.ndarray, a_ub: np.ndarray, b_ub: np.ndarray,
             max_iters: int = DEFAULT_MAX_ITERS) -> LPResult:
    """
    Maximize objective . y subject to a_ub y <= b_ub and y >= 0.

    Rows with a negative right-hand side get an artificial variable and are
    handled in phase one.
    """
    m, n = a_ub.shape
    neg_rows = [r for r in range(m) if b_ub[r] < 0.0]
    n_art = len(neg_rows)
    width = n + m + n_art + 1
    tableau = np.zeros((m + 1, width))
    basis: List[int] = []

    art_col = n + m
    for r in range(m):
        sign = -1.0 if b_ub[r] < 0.0 else 1.0
        tableau[r, :n] = sign * a_ub[r]
        tableau[r, n + r] = sign
        tableau[r, -1] = sign * b_ub[r]
        if sign < 0.0:
            tableau[r, art_col] = 1.0
            basis.append(art_col)
            art_col += 1
        else:
            basis.append(n + r)

    iterations = 0
    if n_art:
        # Phase one: maximize -(sum of artificials).
        tableau[-1, n + m:n + m + n_art] = 1.0
        for r in range(m):
            if basis[r] >= n + m:
                tableau[-1] -= tableau[r]
        iterations += _run_simplex(tableau, basis, n + m + n_art, max_iters)
        scale = 1.0 + float(np.max(np.abs(b_ub))) if m else 1.0
        if tableau[-1, -1] < -FEASIBILITY_TOL * scale:
            return LPResult(status=LPStatus.INFEASIBLE, iterations=iterations)

        # Drive remaining (zero-level) artificials out of the basis.
        keep_rows = []
        for r in range(m):
            if basis[r] >= n + m:
                pivot_col = next((j for j in range(n + m) if abs(tableau[r, j]) > PIVOT_TOL), -1)
                if pivot_col < 0:
                    continue
                _pivot(tableau, r, pivot_col)
                basis[r] = pivot_col
            keep_rows.append(r)
        cols = list(range(n + m)) + [width - 1]
        tableau = np.vstack([tableau[keep_rows][:, cols], np.zeros((1, len(cols)))])
        basis = [basis[r] for r in keep_rows]

    # Phase two objective row: -c, then canonicalize against the basis.
    tableau[-1, :] = 0.0
    tableau[-1, :n] = -objective
    for r, b in enumerate(basis):
        if tableau[-1, b] != 0.0:
            tableau[-1] -= tableau[-1, b] * tableau[r]
    iterations += _run_simplex(tableau, basis, n + m, max_iters)

    point = np.zeros(n)
    for r, b in enumerate(basis):
        if b < n:
            point[b] = tableau[r, -1]
    return LPResult(status=LPStatus.OPTIMAL, value=float(tableau[-1, -1]), point=point,
                    iterations=iterations)


def lp_extremum(halfspaces: Sequence[HalfSpace], box: Box, dim: int, maximize: bool = True,
                max_iters: int = DEFAULT_MAX_ITERS) -> LPResult:
    """
    Extremum of x[dim] over {x in box : every half-space holds}.

    The box must be bounded. Variables are shifted to y = x - lower so that
    the box becomes 0 <= y <= upper - lower.
    """
    if box.is_empty:
        return LPResult(status=LPStatus.INFEASIBLE)
    if not box.is_bounded():
        raise ArgumentError("lp_extremum requires a bounded box")
    if not 0 <= dim < box.dim:
        raise ArgumentError(f"Objective dimension {dim} out of range for box of dimension {box.dim}")

    d = box.dim
    lower = box.lower
    rows = []
    rhs = []
    for space in halfspaces:
        rows.append(np.asarray(space.normal, dtype=float))
        rhs.append(space.offset - float(np.dot(space.normal, lower)))
    eye = np.eye(d)
    for i in range(d):
        rows.append(eye[i])
        rhs.append(box.upper[i] - lower[i])
    a_ub = np.array(rows, dtype=float).reshape(-1, d)
    b_ub = np.array(rhs, dtype=float)

    objective = np.zeros(d)
    objective[dim] = 1.0 if maximize else -1.0
    result = solve_lp(objective, a_ub, b_ub, max_iters=max_iters)
    if not result.is_feasible:
        return result
    x = result.point + lower
    value = float(x[dim])
    return LPResult(status=LPStatus.OPTIMAL, value=value, point=x, iterations=result.iterations)
