"""Two-phase revised simplex for ``min c.x  s.t.  A x = b, x >= 0``.

Written for problems with very few rows (4 for d=2, 8 for d=3) and many
columns, so the basis is refactorised from scratch every iteration and the
cost sits in pricing the nonbasic columns.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"


class SolverError(RuntimeError):
    """Iteration cap hit or unbounded direction; carries diagnostics."""

    def __init__(self, message, **diagnostics):
        super().__init__(f"{message} ({', '.join(f'{k}={v}' for k, v in diagnostics.items())})")
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class Tolerances:
    pivot: float = 1e-9
    feasibility: float = 1e-8
    optimality: float = 1e-9
    stall_iterations: int = 50


@dataclass
class LpProblem:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.A = np.asarray(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        m, n = self.A.shape
        if self.c.shape != (n,) or self.b.shape != (m,):
            raise ValueError(f"shape mismatch: A {self.A.shape}, c {self.c.shape}, b {self.b.shape}")


@dataclass
class LpResult:
    status: str
    objective: float
    support: np.ndarray  # column indices with positive value
    values: np.ndarray
    iterations: int = 0
    basis: np.ndarray = field(default=None, repr=False)

    def dense(self, n: int) -> np.ndarray:
        x = np.zeros(n)
        x[self.support] = self.values
        return x


def envelope_problem(columns, costs, target) -> LpProblem:
    """Convex-combination LP: ``sum xi = 1`` and ``sum xi * columns_i = target``."""
    columns = np.asarray(columns, dtype=float)
    A = np.vstack([np.ones(columns.shape[0]), columns.T])
    b = np.concatenate([[1.0], np.asarray(target, dtype=float)])
    return LpProblem(np.asarray(costs, dtype=float), A, b)


class _Phase:
    """Revised simplex iterations on a fixed column set and cost vector."""

    def __init__(self, A, b, c, basis, tol: Tolerances, max_iter: int):
        self.A, self.b, self.c = A, b, c
        self.basis = basis
        self.tol = tol
        self.max_iter = max_iter
        self.iterations = 0

    def basic_solution(self):
        xb = np.linalg.solve(self.A[:, self.basis], self.b)
        xb[(xb < 0.0) & (xb > -self.tol.feasibility)] = 0.0
        return xb

    def run(self, eligible=None):
        tol = self.tol
        bland = False
        best_obj, stall = np.inf, 0
        while True:
            B = self.A[:, self.basis]
            xb = self.basic_solution()
            obj = float(self.c[self.basis] @ xb)
            if obj < best_obj - tol.optimality * max(1.0, abs(obj)):
                best_obj, stall = obj, 0
            else:
                stall += 1
                if stall >= tol.stall_iterations and not bland:
                    log.debug("no progress for %d iterations, switching to Bland's rule", stall)
                    bland = True
            y = np.linalg.solve(B.T, self.c[self.basis])
            reduced = self.c - y @ self.A
            reduced[self.basis] = 0.0
            if eligible is not None:
                reduced[~eligible] = 0.0
            candidates = np.flatnonzero(reduced < -tol.optimality)
            if candidates.size == 0:
                return xb
            if self.iterations >= self.max_iter:
                raise SolverError(
                    "simplex iteration cap reached",
                    iterations=self.iterations,
                    objective=obj,
                    bland=bland,
                )
            q = candidates[0] if bland else candidates[np.argmin(reduced[candidates])]
            w = np.linalg.solve(B, self.A[:, q])
            rows = np.flatnonzero(w > tol.pivot)
            if rows.size == 0:
                raise SolverError("unbounded direction", column=int(q), iterations=self.iterations)
            ratios = xb[rows] / w[rows]
            theta = ratios.min()
            ties = rows[ratios <= theta + tol.feasibility * 1e-3]
            if bland:
                leave = ties[np.argmin(self.basis[ties])]
            else:
                leave = ties[np.argmax(w[ties])]
            self.basis[leave] = q
            self.iterations += 1


def solve(problem: LpProblem, tol: Tolerances = Tolerances(), max_iter: int | None = None) -> LpResult:
    """Solve the LP with phase I on artificial variables, then phase II.

    Infeasibility is reported through ``status``; running past the iteration
    cap (default ``10 * n``) raises :class:`SolverError`.
    """
    A, b, c = problem.A.copy(), problem.b.copy(), problem.c
    m, n = A.shape
    if max_iter is None:
        max_iter = 10 * max(n, 1)
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0

    # phase I: artificial identity block appended after the original columns
    A1 = np.hstack([A, np.eye(m)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    basis = np.arange(n, n + m)
    phase1 = _Phase(A1, b, c1, basis, tol, max_iter)
    xb = phase1.run()
    infeas = float(xb[basis >= n].sum())
    if infeas > tol.feasibility * max(1.0, float(np.abs(b).max())):
        return LpResult(INFEASIBLE, np.nan, np.array([], dtype=int), np.array([]), phase1.iterations, basis)

    # pivot zero-level artificials out; rows where that fails are redundant
    keep_rows = np.ones(m, dtype=bool)
    for r in np.flatnonzero(basis >= n):
        B = A1[:, basis]
        row = np.linalg.solve(B.T, np.eye(m)[r]) @ A
        row[basis[basis < n]] = 0.0
        j = np.argmax(np.abs(row))
        if abs(row[j]) > tol.pivot:
            basis[r] = j
        else:
            keep_rows[r] = False
    if not keep_rows.all():
        log.debug("dropping %d redundant rows", int((~keep_rows).sum()))
        basis = basis[keep_rows]
        A, b = A[keep_rows], b[keep_rows]

    phase2 = _Phase(A, b, c, basis.copy(), tol, max_iter)
    xb = phase2.run()
    pos = xb > 0.0
    support = phase2.basis[pos]
    values = xb[pos]
    order = np.argsort(support)
    return LpResult(
        OPTIMAL,
        float(c[support] @ values),
        support[order],
        values[order],
        phase1.iterations + phase2.iterations,
        phase2.basis,
    )
