import numpy as np
import pytest

from trussnet.admm import GeneralCost, LocalConstraint, QuadraticCost
from trussnet.oracle import (
    InfeasibleConstraintsError,
    centralized_solve,
    independent_rows,
    nullspace,
    solve_equality_least_squares,
)


def test_symmetric_equality_split():
    # min ||x||^2 s.t. x1 + x2 = 2
    cost = QuadraticCost(np.eye(2), np.zeros(2))
    con = LocalConstraint(np.array([[1.0, 1.0]]), np.array([2.0]))
    x = centralized_solve([cost], [con], 2)
    assert x == pytest.approx([1.0, 1.0])


def test_unconstrained_minimum_is_center():
    c = np.array([3.0, -1.0, 0.5])
    cost = QuadraticCost(np.eye(3), -c)
    x = centralized_solve([cost], [LocalConstraint.empty(3)], 3)
    assert x == pytest.approx(c)


def test_redundant_rows_do_not_break_the_kkt_path():
    cost = QuadraticCost(np.eye(2), np.zeros(2))
    con1 = LocalConstraint(np.array([[1.0, 1.0]]), np.array([2.0]))
    con2 = LocalConstraint(np.array([[2.0, 2.0]]), np.array([4.0]))  # same hyperplane
    x = centralized_solve([cost], [con1, con2], 2)
    assert x == pytest.approx([1.0, 1.0])


def test_inconsistent_redundant_rows_rejected():
    cost = QuadraticCost(np.eye(2), np.zeros(2))
    con1 = LocalConstraint(np.array([[1.0, 1.0]]), np.array([2.0]))
    con2 = LocalConstraint(np.array([[1.0, 1.0]]), np.array([3.0]))
    with pytest.raises(InfeasibleConstraintsError):
        centralized_solve([cost], [con1, con2], 2)


def test_matches_dense_lagrangian_solution_on_random_instances():
    rng = np.random.default_rng(4)
    for _ in range(20):
        dim = int(rng.integers(3, 8))
        D = rng.standard_normal((dim + 2, dim))
        f = rng.standard_normal(dim + 2)
        A = rng.standard_normal((2, dim))
        b = rng.standard_normal(2)
        x = solve_equality_least_squares(D, f, A, b)
        # feasibility and stationarity on the constraint surface
        assert A @ x == pytest.approx(b, abs=1e-10)
        Z = nullspace(A, dim)
        grad = 2 * D.T @ (D @ x + f)
        assert np.max(np.abs(Z.T @ grad)) < 1e-8


def test_general_path_stays_feasible_and_stationary():
    # nonconvex ring-shaped cost with an equality constraint through it
    def value(x):
        return (x @ x - 1.0) ** 2

    def gradient(x):
        return 4.0 * (x @ x - 1.0) * x

    cost = GeneralCost(value=value, gradient=gradient)
    con = LocalConstraint(np.array([[1.0, 0.0]]), np.array([0.6]))
    x = centralized_solve([cost], [con], 2, x0=np.array([0.5, 0.5]))
    assert x[0] == pytest.approx(0.6, abs=1e-10)
    assert x @ x == pytest.approx(1.0, abs=1e-6)


def test_independent_row_selection():
    A = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    b = np.array([1.0, 2.0, 3.0])
    A_sel, b_sel, dropped = independent_rows(A, b)
    assert A_sel.shape == (2, 2)
    assert dropped.size == 1
