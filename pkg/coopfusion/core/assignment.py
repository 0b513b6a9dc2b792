"""
Rectangular Linear Assignment with Forbidden Pairs

Minimum-cost matching of maximum feasible cardinality. The rectangular
problem is embedded in a square one padded with "unmatched" dummy rows and
columns, solved with scipy's Jonker-Volgenant style shortest augmenting path
solver, and then canonicalized so that among all optimal matchings the
lexicographically smallest (row, col) sequence is returned.
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import InvalidInputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CostMatrix:
    """Dense I x J costs with a mask of pairs that may never be matched."""
    cost: np.ndarray
    forbidden: Optional[np.ndarray] = None

    def __post_init__(self):
        cost = np.array(self.cost, dtype=float, copy=True)
        if cost.size == 0 and cost.ndim < 2:
            cost = cost.reshape(0, 0)
        if cost.ndim != 2:
            raise InvalidInputError(f"Cost matrix must be 2-D, got shape {cost.shape}")
        if self.forbidden is None:
            forbidden = ~np.isfinite(cost)
        else:
            forbidden = np.array(self.forbidden, dtype=bool, copy=True)
            if forbidden.shape != cost.shape:
                raise InvalidInputError(
                    f"Forbidden mask shape {forbidden.shape} does not match cost shape {cost.shape}"
                )
        allowed = cost[~forbidden]
        if allowed.size and (not np.all(np.isfinite(allowed)) or np.any(allowed < 0)):
            raise InvalidInputError("Allowed costs must be finite and non-negative")
        cost.setflags(write=False)
        forbidden.setflags(write=False)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "forbidden", forbidden)

    @property
    def rows(self) -> int:
        return self.cost.shape[0]

    @property
    def cols(self) -> int:
        return self.cost.shape[1]

    @property
    def allowed(self) -> np.ndarray:
        return ~self.forbidden


@dataclass(frozen=True)
class AssignmentResult:
    """Matched pairs plus the unmatched rows and columns."""
    matches: List[Tuple[int, int]] = field(default_factory=list)
    unmatched_rows: List[int] = field(default_factory=list)
    unmatched_cols: List[int] = field(default_factory=list)
    total_cost: float = 0.0


def _augment(c: CostMatrix) -> Tuple[np.ndarray, float]:
    """Square (I+J) matrix whose optimum maximizes cardinality first, then minimizes cost."""
    n_rows, n_cols = c.rows, c.cols
    allowed = c.allowed
    # Any extra match saves 2 * unmatched_cost, more than all allowed costs combined
    unmatched_cost = 1.0 + float(np.where(allowed, c.cost, 0.0).sum())
    n = n_rows + n_cols
    square = np.full((n, n), np.inf)
    square[:n_rows, :n_cols] = np.where(allowed, c.cost, np.inf)
    square[np.arange(n_rows), n_cols + np.arange(n_rows)] = unmatched_cost
    square[n_rows + np.arange(n_cols), np.arange(n_cols)] = unmatched_cost
    square[n_rows:, n_cols:] = 0.0
    return square, unmatched_cost


def _dual_potentials(square: np.ndarray, col_of_row: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Optimal dual potentials from an optimal perfect matching.

    Bellman-Ford on the residual graph (row -> col on unmatched edges with
    weight c, col -> row on matched edges with weight -c) from a virtual source.
    Reduced costs c_ij + d_row[i] - d_col[j] are then >= 0 and zero on the matching.
    """
    n = square.shape[0]
    rows = np.arange(n)
    matched_cost = square[rows, col_of_row]
    forward = square.copy()
    forward[rows, col_of_row] = np.inf
    d_row = np.zeros(n)
    d_col = np.zeros(n)
    for _ in range(2 * n + 2):
        new_col = np.minimum(d_col, (d_row[:, None] + forward).min(axis=0))
        new_row = np.minimum(d_row, new_col[col_of_row] - matched_cost)
        if np.array_equal(new_col, d_col) and np.array_equal(new_row, d_row):
            break
        d_row, d_col = new_row, new_col
    return d_row, d_col


def _alternating_path(
    start_row: int,
    target_col: int,
    blocked_row: int,
    eq_cols: List[np.ndarray],
    col_of_row: np.ndarray,
    row_of_col: np.ndarray,
    fixed: np.ndarray,
) -> Optional[List[Tuple[int, int]]]:
    """Moves (row, new col) that free start_row's column while only consuming target_col."""
    parent = {start_row: None}
    queue = deque([start_row])
    while queue:
        row = queue.popleft()
        for col in eq_cols[row]:
            if col == col_of_row[row]:
                continue
            if col == target_col:
                moves = [(row, int(col))]
                while parent[row] is not None:
                    prev_row, prev_col = parent[row]
                    moves.append((prev_row, prev_col))
                    row = prev_row
                return moves
            owner = int(row_of_col[col])
            if owner == blocked_row or fixed[owner] or owner in parent:
                continue
            parent[owner] = (row, int(col))
            queue.append(owner)
    return None


def _lexicographic_canonical(
    square: np.ndarray, col_of_row: np.ndarray, n_real_rows: int, tol: float
) -> np.ndarray:
    """Rewrite an optimal matching into the lexicographically smallest optimal one."""
    n = square.shape[0]
    d_row, d_col = _dual_potentials(square, col_of_row)
    finite = np.isfinite(square)
    reduced = np.where(finite, square + d_row[:, None] - d_col[None, :], np.inf)
    equality = finite & (reduced <= tol)
    equality[np.arange(n), col_of_row] = True
    eq_cols = [np.flatnonzero(equality[r]) for r in range(n)]

    col_of_row = col_of_row.copy()
    row_of_col = np.empty(n, dtype=int)
    row_of_col[col_of_row] = np.arange(n)
    fixed = np.zeros(n, dtype=bool)

    for row in range(n_real_rows):
        current = col_of_row[row]
        for col in eq_cols[row]:
            if col >= current:
                break
            owner = int(row_of_col[col])
            if fixed[owner]:
                continue
            moves = _alternating_path(owner, current, row, eq_cols, col_of_row, row_of_col, fixed)
            if moves is None:
                continue
            for moved_row, new_col in moves:
                col_of_row[moved_row] = new_col
                row_of_col[new_col] = moved_row
            col_of_row[row] = col
            row_of_col[col] = row
            break
        fixed[row] = True
    return col_of_row


def solve_assignment(c: CostMatrix) -> AssignmentResult:
    """
    Solve the rectangular assignment problem.

    Among all matchings that avoid forbidden pairs and have maximum feasible
    cardinality, returns one of minimum total cost; ties resolve to the
    lexicographically smallest (row, col) sequence.

    Args:
        c: Cost matrix with forbidden mask

    Returns:
        AssignmentResult partitioning both index sets
    """
    n_rows, n_cols = c.rows, c.cols
    if n_rows == 0 or n_cols == 0 or not c.allowed.any():
        return AssignmentResult(
            matches=[], unmatched_rows=list(range(n_rows)),
            unmatched_cols=list(range(n_cols)), total_cost=0.0,
        )

    square, unmatched_cost = _augment(c)
    _, col_of_row = linear_sum_assignment(square)
    tol = 1e-12 * square.shape[0] * (1.0 + unmatched_cost)
    col_of_row = _lexicographic_canonical(square, col_of_row, n_rows, tol)

    matches = [(i, int(col_of_row[i])) for i in range(n_rows) if col_of_row[i] < n_cols]
    matched_cols = {j for _, j in matches}
    result = AssignmentResult(
        matches=matches,
        unmatched_rows=[i for i in range(n_rows) if col_of_row[i] >= n_cols],
        unmatched_cols=[j for j in range(n_cols) if j not in matched_cols],
        total_cost=float(sum(c.cost[i, j] for i, j in matches)),
    )
    logger.debug(
        f"Assignment {n_rows}x{n_cols}: {len(matches)} matches, "
        f"total cost {result.total_cost:.6f}"
    )
    return result
