"""Shared independent oracles used by both the unit and acceptance suites."""

import numpy as np

from trussnet.admm import AdmmOptions, ConsensusProblem, LocalConstraint, QuadraticCost


def three_node_instance(iterations=50):
    rng = np.random.default_rng(123)
    dim = 3
    costs = []
    for _ in range(3):
        D = rng.standard_normal((2, dim))
        f = rng.standard_normal(2)
        costs.append(QuadraticCost(D, f))
    constraints = [
        LocalConstraint(rng.standard_normal((1, dim)), rng.standard_normal(1)),
        LocalConstraint.empty(dim),
        LocalConstraint(rng.standard_normal((2, dim)), rng.standard_normal(2)),
    ]
    neighbors = [[1, 2], [0, 2], [0, 1]]
    options = AdmmOptions(alpha_p=0.8, alpha_r=1.3, iterations=iterations)
    problem = ConsensusProblem(dim, costs, constraints, neighbors, options)
    x0 = rng.standard_normal(dim)
    return problem, x0


def run_explicit_multiplier_form(problem, x0):
    """Simulate the scheme with per-pair multipliers and midpoint variables.

    This is the un-eliminated form: one multiplier pair and one midpoint
    variable per ordered neighbor pair, each with its own ascent/argmin
    update, executed literally.
    """
    n = problem.num_nodes
    dim = problem.dimension
    a_p, a_r = problem.options.alpha_p, problem.options.alpha_r
    pairs = [(i, j) for i in range(n) for j in problem.neighbors[i]]

    x = [np.array(x0, dtype=float) for _ in range(n)]
    r = [np.zeros(problem.constraints[i].rows) for i in range(n)]
    lam = {pair: np.zeros(dim) for pair in pairs}
    nu = {pair: np.zeros(dim) for pair in pairs}
    g = {(i, j): 0.5 * (x[i] + x[j]) - (lam[(i, j)] + nu[(i, j)]) / (2 * a_p) for i, j in pairs}

    trajectory = np.zeros((problem.options.iterations, n, dim))
    for k in range(problem.options.iterations):
        lam_new = {p: lam[p] + a_p * (g[p] - x[p[0]]) for p in pairs}
        nu_new = {p: nu[p] + a_p * (g[p] - x[p[1]]) for p in pairs}
        r_new = []
        for i in range(n):
            con = problem.constraints[i]
            if con.rows:
                r_new.append(r[i] + a_r * (con.A @ x[i] - con.b))
            else:
                r_new.append(r[i])
        x_new = []
        for i in range(n):
            cost = problem.costs[i]
            con = problem.constraints[i]
            deg = len(problem.neighbors[i])
            M = 2 * cost.D.T @ cost.D + 2 * a_r * con.A.T @ con.A + 2 * a_p * deg * np.eye(dim)
            rhs = -2 * cost.D.T @ cost.f - con.A.T @ r_new[i] + 2 * a_r * con.A.T @ con.b
            for j in problem.neighbors[i]:
                rhs += lam_new[(i, j)] + nu_new[(j, i)]
                rhs += a_p * (g[(i, j)] + g[(j, i)])
            x_new.append(np.linalg.solve(M, rhs))
        lam, nu, r, x = lam_new, nu_new, r_new, x_new
        g = {(i, j): 0.5 * (x[i] + x[j]) - (lam[(i, j)] + nu[(i, j)]) / (2 * a_p) for i, j in pairs}
        trajectory[k] = np.stack(x)
    return trajectory


def numeric_argmin_bfgs(state, nbr_ids, nbrs, cost, con, options):
    """Independent numeric argmin of the per-node augmented objective."""
    from scipy.optimize import minimize

    mids = [0.5 * (state.x + nbrs[j]) for j in nbr_ids]
    a_p, a_r = options.alpha_p, options.alpha_r

    def value(x):
        res = con.A @ x - con.b
        v = cost.value(x) + state.p @ x + state.r @ res + a_r * res @ res
        return v + a_p * sum((x - m) @ (x - m) for m in mids)

    def grad(x):
        g = cost.gradient(x) + state.p + con.A.T @ state.r
        g = g + 2 * a_p * sum(x - m for m in mids)
        return g + 2 * a_r * con.A.T @ (con.A @ x - con.b)

    return minimize(
        value, state.x, jac=grad, method="BFGS", options={"gtol": 1e-12, "maxiter": 10000}
    ).x


def random_quadratic_instance(rng, dim=5, rows=2, degree=2):
    """A randomized single-node update instance (state, neighbors, cost, rows)."""
    from trussnet.admm import NodeState

    D = rng.standard_normal((int(rng.integers(1, dim + 2)), dim))
    f = rng.standard_normal(D.shape[0])
    A = rng.standard_normal((rows, dim))
    b = rng.standard_normal(rows)
    state = NodeState(
        x=rng.standard_normal(dim),
        p=rng.standard_normal(dim),
        r=rng.standard_normal(rows),
    )
    nbr_ids = list(range(1, degree + 1))
    nbrs = {j: rng.standard_normal(dim) for j in nbr_ids}
    options = AdmmOptions(
        alpha_p=float(rng.uniform(0.3, 2.0)), alpha_r=float(rng.uniform(0.3, 2.0))
    )
    return state, nbr_ids, nbrs, QuadraticCost(D, f), LocalConstraint(A, b), options
