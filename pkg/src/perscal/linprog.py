"""Small dense linear programming via two-phase tableau simplex.

Built for the obedient-signaling benchmark: a few hundred variables at most,
so a dense tableau is simpler and more transparent than sparse machinery.
Bland's rule (lowest-index entering column, lowest-index leaving basic
variable among minimum ratios) guarantees termination despite the degenerate
zero right-hand sides the obedience constraints produce.
"""

from __future__ import annotations

import numpy as np


class LpInfeasibleError(Exception):
    """The constraint system has no feasible point."""


class LpUnboundedError(Exception):
    """The objective is unbounded over the feasible region."""


def _pivot(tableau: np.ndarray, basis: np.ndarray, row: int, col: int):
    tableau[row] /= tableau[row, col]
    factors = tableau[:, col].copy()
    factors[row] = 0.0
    tableau -= np.outer(factors, tableau[row])
    basis[row] = col


def _bland_step(tableau, basis, cost_row, allowed, tol):
    """One Bland pivot on the given cost row; returns False at optimality."""
    reduced = cost_row[:-1]
    candidates = np.nonzero(allowed & (reduced < -tol))[0]
    if candidates.size == 0:
        return False
    col = int(candidates[0])
    column = tableau[:, col]
    rhs = tableau[:, -1]
    rows = np.nonzero(column > tol)[0]
    if rows.size == 0:
        raise LpUnboundedError(f"column {col} is unbounded")
    ratios = rhs[rows] / column[rows]
    best = ratios.min()
    near = rows[ratios <= best + tol]
    row = int(near[np.argmin(basis[near])])
    _pivot(tableau, basis, row, col)
    cost_row -= cost_row[col] * tableau[row]
    return True


def simplex_solve(
    c,
    a_ub=None,
    b_ub=None,
    a_eq=None,
    b_eq=None,
    tol: float = 1e-9,
    max_pivots: int | None = None,
):
    """Minimize c @ x subject to a_ub x <= b_ub, a_eq x = b_eq, x >= 0.

    Returns (x, value). Raises LpInfeasibleError / LpUnboundedError.
    """
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    a_ub = np.zeros((0, n)) if a_ub is None else np.atleast_2d(np.asarray(a_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.atleast_1d(np.asarray(b_ub, dtype=float))
    a_eq = np.zeros((0, n)) if a_eq is None else np.atleast_2d(np.asarray(a_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.atleast_1d(np.asarray(b_eq, dtype=float))
    if a_ub.shape != (b_ub.shape[0], n) or a_eq.shape != (b_eq.shape[0], n):
        raise ValueError("constraint matrix shapes do not match the objective length")

    n_ub, n_eq = a_ub.shape[0], a_eq.shape[0]
    m = n_ub + n_eq
    if max_pivots is None:
        max_pivots = 2000 * (m + n + 10)

    # columns: x (n) | slacks (n_ub) | artificials (filled below) | rhs
    body = np.zeros((m, n + n_ub))
    body[:n_ub, :n] = a_ub
    body[:n_ub, n : n + n_ub] = np.eye(n_ub)
    body[n_ub:, :n] = a_eq
    rhs = np.concatenate([b_ub, b_eq])
    negative = rhs < 0
    body[negative] *= -1.0
    rhs = np.abs(rhs)

    # slack serves as the initial basic variable only on non-negated ub rows
    needs_artificial = np.ones(m, dtype=bool)
    needs_artificial[:n_ub] = negative[:n_ub]
    art_rows = np.nonzero(needs_artificial)[0]
    n_art = art_rows.shape[0]

    total = n + n_ub + n_art
    tableau = np.zeros((m, total + 1))
    tableau[:, : n + n_ub] = body
    tableau[:, -1] = rhs
    basis = np.empty(m, dtype=np.int64)
    for i in range(n_ub):
        basis[i] = n + i
    for k, r in enumerate(art_rows):
        tableau[r, n + n_ub + k] = 1.0
        basis[r] = n + n_ub + k

    is_artificial = np.zeros(total, dtype=bool)
    is_artificial[n + n_ub :] = True

    # phase 1: minimize the artificial mass
    cost1 = np.zeros(total + 1)
    cost1[n + n_ub : total] = 1.0
    for r in art_rows:
        cost1 -= tableau[r]
    allowed = ~is_artificial
    pivots = 0
    while _bland_step(tableau, basis, cost1, allowed, tol):
        pivots += 1
        if pivots > max_pivots:
            raise RuntimeError("phase-1 pivot budget exhausted")
    if -cost1[-1] > 1e-7:
        raise LpInfeasibleError(f"artificial mass {-cost1[-1]:.3g} cannot be driven to zero")

    # drive leftover zero-valued artificials out of the basis
    for r in range(m):
        if is_artificial[basis[r]]:
            cols = np.nonzero(np.abs(tableau[r, : n + n_ub]) > tol)[0]
            if cols.size:
                _pivot(tableau, basis, r, int(cols[0]))
            # an all-zero row is a redundant constraint; leaving the zero
            # artificial basic is harmless because its column never re-enters

    # phase 2 on the original objective
    cost2 = np.zeros(total + 1)
    cost2[:n] = c
    for r in range(m):
        if cost2[basis[r]] != 0.0:
            cost2 -= cost2[basis[r]] * tableau[r]
    while _bland_step(tableau, basis, cost2, allowed, tol):
        pivots += 1
        if pivots > max_pivots:
            raise RuntimeError("phase-2 pivot budget exhausted")

    x = np.zeros(total)
    x[basis] = tableau[:, -1]
    x = x[:n]
    return x, float(c @ x)
