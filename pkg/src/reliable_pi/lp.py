"""Dense two-phase tableau simplex with Bland's rule.

Problems are stated as ``maximize c @ x  s.t.  G @ x <= h`` with ``x`` free;
sign restrictions are ordinary rows of ``G``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-12


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class LinearProgram:
    objective: np.ndarray
    constraint_matrix: np.ndarray
    constraint_rhs: np.ndarray
    objective_offset: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=np.float64).reshape(-1)
        G = np.asarray(self.constraint_matrix, dtype=np.float64)
        h = np.asarray(self.constraint_rhs, dtype=np.float64).reshape(-1)
        if G.ndim == 1 and G.size == 0:
            G = G.reshape(0, c.size)
        if G.ndim != 2 or G.shape[1] != c.size or G.shape[0] != h.size:
            raise ValueError(f"inconsistent LP dimensions c{c.shape} G{G.shape} h{h.shape}")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "constraint_matrix", G)
        object.__setattr__(self, "constraint_rhs", h)

    @property
    def num_vars(self) -> int:
        return self.objective.size

    @property
    def num_constraints(self) -> int:
        return self.constraint_rhs.size

    def value(self, x: np.ndarray) -> float:
        return float(self.objective @ x) + self.objective_offset

    def max_violation(self, x: np.ndarray) -> float:
        if self.num_constraints == 0:
            return 0.0
        return float(np.max(self.constraint_matrix @ x - self.constraint_rhs))


@dataclass(frozen=True)
class LpResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None = None
    value: float | None = None
    pivots: int = 0


class _Tableau:
    """Rows ``A z = b`` (b >= 0) with basis; reduced costs kept in ``cost``."""

    def __init__(self, A: np.ndarray, b: np.ndarray, basis: list[int]):
        self.T = np.hstack([A, b[:, None]])
        self.basis = list(basis)
        self.pivots = 0

    def pivot(self, row: int, col: int, cost: np.ndarray) -> None:
        T = self.T
        piv = T[row, col]
        if abs(piv) < PIVOT_TOL:
            raise SolverError(f"pivot element {piv:.3e} below tolerance")
        T[row] /= piv
        col_vals = T[:, col].copy()
        col_vals[row] = 0.0
        T -= np.outer(col_vals, T[row])
        cost -= cost[col] * T[row]
        self.basis[row] = col
        self.pivots += 1

    def run(self, cost: np.ndarray, allowed: np.ndarray, max_pivots: int) -> str:
        """Maximize with reduced-cost row ``cost`` (last entry = -objective value)."""
        T = self.T
        for _ in range(max_pivots):
            candidates = np.flatnonzero((cost[:-1] > OPT_TOL) & allowed)
            if candidates.size == 0:
                return "optimal"
            col = int(candidates[0])  # Bland: lowest index
            column = T[:, col]
            pos = np.flatnonzero(column > FEAS_TOL)
            if pos.size == 0:
                return "unbounded"
            ratios = T[pos, -1] / column[pos]
            best = ratios.min()
            ties = pos[ratios <= best + FEAS_TOL * max(1.0, abs(best))]
            row = int(min(ties, key=lambda i: self.basis[i]))
            self.pivot(row, col, cost)
        raise SolverError("pivot limit exceeded")


def simplex_solve(lp: LinearProgram, max_pivots: int = 50_000) -> LpResult:
    G, h, c = lp.constraint_matrix, lp.constraint_rhs, lp.objective
    m, n = G.shape
    if m == 0:
        if np.any(c != 0):
            return LpResult("unbounded")
        x = np.zeros(n)
        return LpResult("optimal", x, lp.value(x))
    # columns: x+ (n), x- (n), slacks (m), artificials (one per negative-rhs row)
    neg = h < 0
    sign = np.where(neg, -1.0, 1.0)
    art_rows = np.flatnonzero(neg)
    n_struct = 2 * n + m
    A = np.zeros((m, n_struct + art_rows.size))
    A[:, :n] = G * sign[:, None]
    A[:, n:2 * n] = -G * sign[:, None]
    A[np.arange(m), 2 * n + np.arange(m)] = sign
    A[art_rows, n_struct + np.arange(art_rows.size)] = 1.0
    b = h * sign
    basis = [2 * n + i for i in range(m)]
    for k, i in enumerate(art_rows):
        basis[i] = n_struct + k
    tab = _Tableau(A, b, basis)
    total_cols = A.shape[1]

    if art_rows.size:
        # phase 1: maximize -sum(artificials)
        cost = np.zeros(total_cols + 1)
        cost[n_struct:total_cols] = -1.0
        for i in art_rows:
            cost += tab.T[i]
        allowed = np.ones(total_cols, dtype=bool)
        status = tab.run(cost, allowed, max_pivots)
        if status != "optimal":
            raise SolverError("phase 1 reported unbounded")
        if cost[-1] > FEAS_TOL * max(1.0, np.abs(b).max()):
            return LpResult("infeasible", pivots=tab.pivots)
        # drive zero-level artificials out of the basis; drop redundant rows
        for row in range(m - 1, -1, -1):
            if tab.basis[row] < n_struct:
                continue
            entries = np.flatnonzero(np.abs(tab.T[row, :n_struct]) > FEAS_TOL)
            if entries.size:
                tab.pivot(row, int(entries[0]), cost)
            else:
                tab.T = np.delete(tab.T, row, axis=0)
                del tab.basis[row]

    allowed = np.zeros(total_cols, dtype=bool)
    allowed[:n_struct] = True
    cost = np.zeros(total_cols + 1)
    cost[:n] = c
    cost[n:2 * n] = -c
    for row, j in enumerate(tab.basis):
        if cost[j] != 0.0:
            cost -= cost[j] * tab.T[row]
    status = tab.run(cost, allowed, max_pivots)
    if status == "unbounded":
        return LpResult("unbounded", pivots=tab.pivots)

    z = _basic_solution(A, b, tab)
    x = z[:n] - z[n:2 * n]
    return LpResult("optimal", x, lp.value(x), pivots=tab.pivots)


def _basic_solution(A: np.ndarray, b: np.ndarray, tab: _Tableau) -> np.ndarray:
    """Re-solve the final basis against the original data to shed pivot round-off."""
    z = np.zeros(A.shape[1])
    basis = tab.basis
    z[basis] = tab.T[:, -1]
    B = A[:, basis]
    if B.shape[0] == B.shape[1]:
        try:
            z[basis] = np.linalg.solve(B, b)
        except np.linalg.LinAlgError:
            pass
    else:
        sol, *_ = np.linalg.lstsq(B, b, rcond=None)
        if np.allclose(B @ sol, b, atol=1e-9):
            z[basis] = sol
    return z


def vertex_enumeration(lp: LinearProgram, tol: float = 1e-9) -> LpResult:
    """Brute-force optimum over all basic feasible points and extreme rays.

    Only valid for pointed feasible sets (rank G = n): the LP is unbounded iff
    it is feasible and some extreme ray d (n - 1 tight rows, G d <= 0) has
    c . d > 0.
    """
    G, h = lp.constraint_matrix, lp.constraint_rhs
    m, n = G.shape
    if np.linalg.matrix_rank(G) < n:
        raise ValueError("vertex enumeration needs a pointed feasible set (rank G = n)")
    best_x, best_val = None, -np.inf
    for rows in itertools.combinations(range(m), n):
        sub = G[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, h[list(rows)])
        if np.all(G @ x <= h + tol):
            val = lp.value(x)
            if val > best_val:
                best_x, best_val = x, val
    if best_x is None:
        return LpResult("infeasible")
    for rows in itertools.combinations(range(m), n - 1):
        if n == 1:
            dirs = [np.array([1.0]), np.array([-1.0])]
        else:
            _, sv, vt = np.linalg.svd(G[list(rows)])
            if np.sum(sv > 1e-10) < n - 1:
                continue
            dirs = [vt[-1], -vt[-1]]
        for d in dirs:
            if np.all(G @ d <= tol) and lp.objective @ d > tol:
                return LpResult("unbounded")
    return LpResult("optimal", best_x, best_val)
