"""Centralized reference solver used to validate the distributed engine.

Quadratic problems are solved exactly through the equality-constrained
least-squares KKT system; general problems by gradient descent restricted
to the affine feasible set (null-space parameterization), started from a
feasible point.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.linalg import qr

from .admm import (
    GeneralCost,
    IllPosedProblemError,
    InnerSolverConfig,
    LocalConstraint,
    LocalCost,
    QuadraticCost,
    minimize_backtracking,
)


class InfeasibleConstraintsError(ValueError):
    """Stacked equality constraints admit no common solution."""


def stack_constraints(
    constraints: Sequence[LocalConstraint], dimension: int
) -> tuple[np.ndarray, np.ndarray]:
    blocks_A = [c.A for c in constraints if c.rows]
    blocks_b = [c.b for c in constraints if c.rows]
    if not blocks_A:
        return np.zeros((0, dimension)), np.zeros(0)
    return np.vstack(blocks_A), np.concatenate(blocks_b)


def independent_rows(A: np.ndarray, b: np.ndarray, rtol: float = 1e-10):
    """Select a maximal independent row subset; returns (A_sel, b_sel, dropped)."""
    if A.shape[0] == 0:
        return A, b, np.zeros(0, dtype=int)
    _, R, piv = qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rtol * (diag[0] if diag.size else 1.0))) if diag.size else 0
    keep = np.sort(piv[:rank])
    dropped = np.setdiff1d(np.arange(A.shape[0]), keep)
    return A[keep], b[keep], dropped


def feasible_point(A: np.ndarray, b: np.ndarray, x0: np.ndarray | None, dimension: int):
    """Project x0 (or the origin) onto ``Ax = b``."""
    if A.shape[0] == 0:
        return np.zeros(dimension) if x0 is None else np.array(x0, dtype=float)
    base = np.zeros(dimension) if x0 is None else np.asarray(x0, dtype=float)
    correction, *_ = np.linalg.lstsq(A, b - A @ base, rcond=None)
    x = base + correction
    if np.linalg.norm(A @ x - b) > 1e-8 * max(1.0, np.linalg.norm(b)):
        raise InfeasibleConstraintsError("constraints admit no common solution")
    return x


def nullspace(A: np.ndarray, dimension: int, rtol: float = 1e-10) -> np.ndarray:
    if A.shape[0] == 0:
        return np.eye(dimension)
    _, s, Vt = np.linalg.svd(A, full_matrices=True)
    tol = rtol * (s[0] if s.size else 1.0)
    rank = int(np.sum(s > tol))
    return Vt[rank:].T


def solve_equality_least_squares(
    D: np.ndarray, f: np.ndarray, A: np.ndarray, b: np.ndarray
) -> np.ndarray:
    """Exact minimizer of ``||D x + f||^2`` subject to ``A x = b`` via KKT."""
    dim = D.shape[1]
    A_ind, b_ind, dropped = independent_rows(A, b)
    m = A_ind.shape[0]
    H = 2.0 * D.T @ D
    K = np.zeros((dim + m, dim + m))
    K[:dim, :dim] = H
    K[:dim, dim:] = A_ind.T
    K[dim:, :dim] = A_ind
    rhs = np.concatenate([-2.0 * D.T @ f, b_ind])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError as exc:
        raise IllPosedProblemError("KKT system is singular") from exc
    x = sol[:dim]
    if dropped.size:
        resid = np.abs(A[dropped] @ x - b[dropped])
        scale = max(1.0, float(np.linalg.norm(b)))
        if np.any(resid > 1e-8 * scale):
            raise InfeasibleConstraintsError("redundant constraint rows are inconsistent")
    return x


def centralized_solve(
    costs: Sequence[LocalCost],
    constraints: Sequence[LocalConstraint],
    dimension: int,
    x0: np.ndarray | None = None,
    inner: InnerSolverConfig = InnerSolverConfig(grad_tol=1e-10, max_iterations=20000),
) -> np.ndarray:
    """Solve ``min sum_i J_i(x) s.t. all local constraints`` in one place.

    Quadratic-only cost stacks take the exact KKT path.  Any general cost
    switches to feasible-set gradient descent from ``x0`` projected onto the
    constraints (a feasible start near the basin of interest matters for
    nonconvex costs).
    """
    A, b = stack_constraints(constraints, dimension)
    if all(isinstance(c, QuadraticCost) for c in costs):
        Ds = [c.D for c in costs if c.D.shape[0]]
        fs = [c.f for c in costs if c.f.size]
        D = np.vstack(Ds) if Ds else np.zeros((0, dimension))
        f = np.concatenate(fs) if fs else np.zeros(0)
        return solve_equality_least_squares(D, f, A, b)

    A_ind, b_ind, _ = independent_rows(A, b)
    x_feas = feasible_point(A_ind, b_ind, x0, dimension)
    Z = nullspace(A_ind, dimension)
    if Z.shape[1] == 0:
        return x_feas

    def value(y: np.ndarray) -> float:
        x = x_feas + Z @ y
        return sum(c.value(x) for c in costs)

    def gradient(y: np.ndarray) -> np.ndarray:
        x = x_feas + Z @ y
        g = np.zeros(dimension)
        for c in costs:
            g += c.gradient(x)
        return Z.T @ g

    y_opt, _ = minimize_backtracking(value, gradient, np.zeros(Z.shape[1]), inner)
    return x_feas + Z @ y_opt
