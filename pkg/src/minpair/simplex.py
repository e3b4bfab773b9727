"""Dense two-phase tableau simplex for small equality-form LPs.

    minimize c @ x  subject to  A @ x = b,  x >= 0

Phase I starts from an all-artificial basis. Entering/leaving choices follow
Bland's smallest-index rule, so degenerate problems (the balance constraints
of an MDP have zero right-hand sides) cannot cycle. The artificial columns are
kept in the tableau after phase I; they hold B^-1, from which the dual
solution is read off.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-11


@dataclass
class LPResult:
    status: str  # optimal | infeasible | unbounded | iteration_limit
    x: np.ndarray | None
    objective: float
    duals: np.ndarray | None  # one multiplier per equality row of the input
    iterations: int
    redundant_rows: tuple = ()


def _pivot(T, rhs, basis, r, j):
    piv = T[r, j]
    T[r] /= piv
    rhs[r] /= piv
    col = T[:, j].copy()
    col[r] = 0.0
    nz = np.flatnonzero(np.abs(col) > 0)
    if nz.size:
        T[nz] -= np.outer(col[nz], T[r])
        rhs[nz] -= col[nz] * rhs[r]
        rhs[nz[np.abs(rhs[nz]) < 1e-15]] = 0.0
    basis[r] = j


def _iterate(T, rhs, basis, cost, n_allowed, tol, max_iter, rule):
    """Run simplex pivots until optimal; returns (status, iterations)."""
    it = 0
    while it < max_iter:
        reduced = cost[:n_allowed] - cost[basis] @ T[:, :n_allowed]
        if rule == "bland":
            cand = np.flatnonzero(reduced < -tol)
            if cand.size == 0:
                return "optimal", it
            j = int(cand[0])
        else:
            j = int(np.argmin(reduced))
            if reduced[j] >= -tol:
                return "optimal", it
        col = T[:, j]
        rows = np.flatnonzero(col > PIVOT_TOL)
        if rows.size == 0:
            return "unbounded", it
        ratios = rhs[rows] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
        r = int(ties[np.argmin(np.asarray(basis)[ties])])
        _pivot(T, rhs, basis, r, j)
        it += 1
    return "iteration_limit", it


def solve_lp(c, A, b, tol: float = 1e-9, max_iter: int = 50_000, rule: str = "bland") -> LPResult:
    """Solve the equality-form LP by the two-phase simplex method.

    ``rule`` is ``"bland"`` (default, anti-cycling) or ``"dantzig"``
    (most negative reduced cost, still Bland tie-breaking on the ratio test).
    """
    if rule not in ("bland", "dantzig"):
        raise ValueError(f"minpair-solver: unknown pivot rule {rule!r}")
    c = np.asarray(c, dtype=float)
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    m, n = A.shape
    sign = np.where(b < 0, -1.0, 1.0)
    A *= sign[:, None]
    b *= sign
    T = np.hstack([A, np.eye(m)])
    rhs = b.copy()
    basis = list(range(n, n + m))

    phase1 = np.concatenate([np.zeros(n), np.ones(m)])
    status, it1 = _iterate(T, rhs, basis, phase1, n, tol, max_iter, rule)
    if status == "iteration_limit":
        return LPResult(status, None, np.nan, None, it1)
    infeas = float(rhs[np.asarray(basis) >= n].sum())
    if infeas > tol:
        return LPResult("infeasible", None, np.nan, None, it1)

    # drive zero-level artificials out of the basis; rows where that is
    # impossible are linear combinations of the others
    keep = []
    redundant = []
    for r in range(m):
        if basis[r] >= n:
            cand = np.flatnonzero(np.abs(T[r, :n]) > PIVOT_TOL)
            if cand.size:
                _pivot(T, rhs, basis, r, int(cand[0]))
            else:
                redundant.append(basis[r] - n)
                continue
        keep.append(r)
    T = T[keep]
    rhs = rhs[keep]
    basis = [basis[r] for r in keep]

    full_cost = np.concatenate([c, np.zeros(m)])
    status, it2 = _iterate(T, rhs, basis, full_cost, n, tol, max_iter, rule)
    iters = it1 + it2
    if status != "optimal":
        return LPResult(status, None, np.nan, None, iters, tuple(redundant))
    x = np.zeros(n + m)
    x[basis] = np.clip(rhs, 0.0, None)
    x = x[:n]
    duals = (full_cost[basis] @ T[:, n:]) * sign
    return LPResult("optimal", x, float(c @ x), duals, iters, tuple(redundant))
