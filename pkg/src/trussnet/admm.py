"""Consensus optimization engine.

Every node keeps a full copy ``x_i`` of the shared decision vector, a local
cost (quadratic or black-box-with-gradient), an optional block of locally
held linear equality constraints ``A_i x = b_i``, and multipliers ``p_i``
(disagreement with neighbors) and ``r_i`` (own constraints).  A synchronous
round exchanges estimates with neighbors and then advances every node:
dual ascent on ``p_i`` and ``r_i``, followed by a primal minimization of
the node's augmented objective

    J_i(x) + p_i.x + r_i.(A_i x - b_i)
    + alpha_p * sum_j ||x - (x_i + x_j)/2||^2 + alpha_r * ||A_i x - b_i||^2

For quadratic costs the primal step has a closed form whose system matrix
is fixed across rounds, so its factorization is computed once per problem.
The only payload ever exchanged is the estimate vector itself; an optional
transcript records every message for auditing.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve


class ConfigurationError(ValueError):
    """The problem instance is malformed (e.g. disconnected communication graph)."""


class ProtocolError(RuntimeError):
    """A node update was attempted without the required neighbor estimates."""


class IllPosedProblemError(np.linalg.LinAlgError):
    """A linear system that the algorithm requires to be invertible is singular."""


class NumericalFailureError(FloatingPointError):
    """An inner solve produced a non-finite value; carries the offending iterate."""

    def __init__(self, message: str, iterate: np.ndarray):
        super().__init__(message)
        self.iterate = np.array(iterate)


@dataclass(frozen=True)
class QuadraticCost:
    """Cost ``||D x + f||^2`` over the full decision vector."""

    D: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "D", np.atleast_2d(np.asarray(self.D, dtype=float)))
        object.__setattr__(self, "f", np.asarray(self.f, dtype=float).reshape(-1))
        if self.D.shape[0] != self.f.size:
            raise ValueError("row count of D must match length of f")

    def value(self, x: np.ndarray) -> float:
        res = self.D @ x + self.f
        return float(res @ res)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return 2.0 * self.D.T @ (self.D @ x + self.f)


@dataclass(frozen=True)
class GeneralCost:
    """Cost given as value/gradient callables over the full decision vector."""

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]


LocalCost = QuadraticCost | GeneralCost


def zero_cost(dimension: int) -> QuadraticCost:
    return QuadraticCost(np.zeros((0, dimension)), np.zeros(0))


@dataclass(frozen=True)
class LocalConstraint:
    """Equality block ``A x = b`` held by one node.  May be empty."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", np.atleast_2d(np.asarray(self.A, dtype=float)))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(-1))
        if self.A.shape[0] != self.b.size:
            raise ValueError("row count of A must match length of b")

    @classmethod
    def empty(cls, dimension: int) -> "LocalConstraint":
        return cls(np.zeros((0, dimension)), np.zeros(0))

    @property
    def rows(self) -> int:
        return self.A.shape[0]

    def violation(self, x: np.ndarray) -> float:
        if self.rows == 0:
            return 0.0
        return float(np.linalg.norm(self.A @ x - self.b))


@dataclass(frozen=True)
class AdmmOptions:
    alpha_p: float = 1.0
    alpha_r: float = 1.0
    iterations: int = 200

    def __post_init__(self):
        if self.alpha_p <= 0 or self.alpha_r <= 0:
            raise ValueError("penalty weights must be positive")
        if self.iterations < 0:
            raise ValueError("iteration count must be nonnegative")


@dataclass(frozen=True)
class InnerSolverConfig:
    """Stopping rule for the gradient-descent primal step of general costs."""

    grad_tol: float = 1e-8
    max_iterations: int = 500


@dataclass
class NodeState:
    """One node's copy of the decision vector and its multipliers."""

    x: np.ndarray
    p: np.ndarray
    r: np.ndarray


@dataclass(frozen=True)
class ConsensusProblem:
    """A distributed instance: per-node costs, constraints and neighbor lists.

    The union of the local constraints must imply the centralized constraint
    set (caller's obligation), and the communication graph must be connected,
    otherwise agreement of all copies is not implied.
    """

    dimension: int
    costs: Sequence[LocalCost]
    constraints: Sequence[LocalConstraint]
    neighbors: Sequence[Sequence[int]]
    options: AdmmOptions = field(default_factory=AdmmOptions)
    inner: InnerSolverConfig = field(default_factory=InnerSolverConfig)

    def __post_init__(self):
        n = len(self.costs)
        if len(self.constraints) != n or len(self.neighbors) != n:
            raise ConfigurationError("costs, constraints and neighbors must align")
        for i, nbrs in enumerate(self.neighbors):
            for j in nbrs:
                if not (0 <= j < n) or j == i:
                    raise ConfigurationError(f"bad neighbor {j} at node {i}")
                if i not in self.neighbors[j]:
                    raise ConfigurationError(f"neighbor lists not symmetric at ({i},{j})")
        for i, c in enumerate(self.costs):
            if isinstance(c, QuadraticCost) and c.D.shape[1] != self.dimension:
                raise ConfigurationError(f"cost at node {i} has wrong column count")
        for i, c in enumerate(self.constraints):
            if c.A.shape[1] != self.dimension:
                raise ConfigurationError(f"constraint at node {i} has wrong column count")

    @property
    def num_nodes(self) -> int:
        return len(self.costs)

    def is_connected(self) -> bool:
        if self.num_nodes == 0:
            return False
        seen = {0}
        stack = [0]
        while stack:
            v = stack.pop()
            for w in self.neighbors[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.num_nodes

    def total_cost(self, x: np.ndarray) -> float:
        """Centralized objective: sum of every node's local cost at one point."""
        total = 0.0
        for c in self.costs:
            total += c.value(x) if isinstance(c, QuadraticCost) else c.value(x)
        return total


@dataclass
class Message:
    round: int
    sender: int
    receiver: int
    payload: np.ndarray


@dataclass
class RoundDiagnostics:
    """Per-round convergence data recorded by the executor."""

    consensus_residual: np.ndarray          # (rounds,)
    constraint_violation: np.ndarray        # (rounds, nodes)
    centralized_cost: np.ndarray | None     # (rounds, nodes)
    states: np.ndarray | None = None        # (rounds, nodes, dimension)
    transcript: list[Message] | None = None


# ---------------------------------------------------------------------------
# Single-node update rules
# ---------------------------------------------------------------------------

def dual_update_p(
    state: NodeState,
    neighbor_ids: Sequence[int],
    neighbor_estimates: Mapping[int, np.ndarray],
    alpha_p: float,
) -> np.ndarray:
    """Disagreement-multiplier ascent: ``p + alpha_p * sum_j (x_i - x_j)``."""
    acc = np.zeros_like(state.p)
    for j in neighbor_ids:
        if j not in neighbor_estimates:
            raise ProtocolError(f"missing estimate from neighbor {j}")
        acc += state.x - neighbor_estimates[j]
    return state.p + alpha_p * acc


def dual_update_r(state: NodeState, constraint: LocalConstraint, alpha_r: float) -> np.ndarray:
    """Constraint-multiplier ascent: ``r + alpha_r * (A x_i - b)``; no-op when empty."""
    if constraint.rows == 0:
        return state.r
    return state.r + alpha_r * (constraint.A @ state.x - constraint.b)


def _quadratic_system(
    cost: QuadraticCost, constraint: LocalConstraint, degree: int, options: AdmmOptions, dim: int
) -> np.ndarray:
    M = 2.0 * cost.D.T @ cost.D
    M += 2.0 * options.alpha_r * constraint.A.T @ constraint.A
    M += 2.0 * options.alpha_p * degree * np.eye(dim)
    return M


def _quadratic_rhs(
    cost: QuadraticCost,
    constraint: LocalConstraint,
    options: AdmmOptions,
    p_new: np.ndarray,
    r_new: np.ndarray,
    x_i: np.ndarray,
    neighbor_sum: np.ndarray,
    degree: int,
) -> np.ndarray:
    rhs = 2.0 * options.alpha_r * constraint.A.T @ constraint.b
    rhs -= p_new
    rhs -= constraint.A.T @ r_new
    rhs -= 2.0 * cost.D.T @ cost.f
    rhs += options.alpha_p * (degree * x_i + neighbor_sum)
    return rhs


def primal_update_quadratic(
    state: NodeState,
    neighbor_ids: Sequence[int],
    neighbor_estimates: Mapping[int, np.ndarray],
    cost: QuadraticCost,
    constraint: LocalConstraint,
    options: AdmmOptions,
) -> np.ndarray:
    """Closed-form minimizer of the node's augmented objective.

    ``p`` and ``r`` in `state` must already hold their advanced (k+1) values.
    """
    dim = state.x.size
    degree = len(neighbor_ids)
    M = _quadratic_system(cost, constraint, degree, options, dim)
    nbr_sum = np.zeros(dim)
    for j in neighbor_ids:
        if j not in neighbor_estimates:
            raise ProtocolError(f"missing estimate from neighbor {j}")
        nbr_sum += neighbor_estimates[j]
    rhs = _quadratic_rhs(cost, constraint, options, state.p, state.r, state.x, nbr_sum, degree)
    try:
        factor = cho_factor(M)
    except np.linalg.LinAlgError as exc:
        raise IllPosedProblemError(
            "augmented system is singular (isolated node with no cost or constraints?)"
        ) from exc
    return cho_solve(factor, rhs)


def minimize_backtracking(
    value: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    config: InnerSolverConfig,
    initial_step: float = 1.0,
) -> tuple[np.ndarray, float]:
    """Gradient descent with backtracking line search and spectral step sizes.

    Step lengths follow the Barzilai-Borwein rule, safeguarded by a
    nonmonotone Armijo backtracking loop, so each iterate is still a plain
    descent step along the negative gradient.  Returns the iterate and the
    last accepted step (a good warm start for the next call).  Raises
    NumericalFailureError on non-finite values.
    """
    x = np.array(x0, dtype=float)
    step = min(max(initial_step, 1e-12), 1e8)
    f = value(x)
    if not np.isfinite(f):
        raise NumericalFailureError("objective is non-finite at the start point", x)
    recent = [f]
    g = gradient(x)
    for _ in range(config.max_iterations):
        gnorm2 = float(g @ g)
        if not np.isfinite(gnorm2):
            raise NumericalFailureError("gradient is non-finite", x)
        if np.sqrt(gnorm2) <= config.grad_tol:
            break
        t = step
        f_ref = max(recent)
        while True:
            x_new = x - t * g
            f_new = value(x_new)
            if np.isfinite(f_new) and f_new <= f_ref - 1e-4 * t * gnorm2:
                break
            t *= 0.5
            if t < 1e-16:
                # flat to machine precision; accept the current point
                return x, step
        g_new = gradient(x_new)
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        step = float(s @ s) / sy if sy > 1e-18 else min(t * 2.0, 1e8)
        step = min(max(step, 1e-12), 1e8)
        x, f, g = x_new, f_new, g_new
        recent.append(f)
        if len(recent) > 10:
            recent.pop(0)
    return x, step


def _augmented_general(
    cost: GeneralCost,
    constraint: LocalConstraint,
    options: AdmmOptions,
    p_new: np.ndarray,
    r_new: np.ndarray,
    midpoint_sum: np.ndarray,
    midpoint_sq: float,
    degree: int,
):
    A, b = constraint.A, constraint.b
    a_p, a_r = options.alpha_p, options.alpha_r

    def value(x: np.ndarray) -> float:
        res = A @ x - b
        v = cost.value(x) + float(p_new @ x) + float(r_new @ res) + a_r * float(res @ res)
        v += a_p * (degree * float(x @ x) - 2.0 * float(x @ midpoint_sum) + midpoint_sq)
        return v

    def gradient(x: np.ndarray) -> np.ndarray:
        g = cost.gradient(x) + p_new + A.T @ r_new
        g += 2.0 * a_p * (degree * x - midpoint_sum)
        g += 2.0 * a_r * A.T @ (A @ x - b)
        return g

    return value, gradient


def primal_update_general(
    state: NodeState,
    neighbor_ids: Sequence[int],
    neighbor_estimates: Mapping[int, np.ndarray],
    cost: GeneralCost,
    constraint: LocalConstraint,
    options: AdmmOptions,
    inner: InnerSolverConfig = InnerSolverConfig(),
) -> np.ndarray:
    """Approximate minimizer of the node's augmented objective by descent."""
    mid_sum = np.zeros_like(state.x)
    mid_sq = 0.0
    for j in neighbor_ids:
        if j not in neighbor_estimates:
            raise ProtocolError(f"missing estimate from neighbor {j}")
        m = 0.5 * (state.x + neighbor_estimates[j])
        mid_sum += m
        mid_sq += float(m @ m)
    value, gradient = _augmented_general(
        cost, constraint, options, state.p, state.r, mid_sum, mid_sq, len(neighbor_ids)
    )
    x_new, _ = minimize_backtracking(value, gradient, state.x, inner)
    return x_new


# ---------------------------------------------------------------------------
# Round executor
# ---------------------------------------------------------------------------

class _QuadraticSolver:
    """Per-node closed-form primal step with the factorization cached."""

    def __init__(self, problem: ConsensusProblem, i: int):
        self.cost: QuadraticCost = problem.costs[i]  # type: ignore[assignment]
        self.constraint = problem.constraints[i]
        self.options = problem.options
        self.degree = len(problem.neighbors[i])
        M = _quadratic_system(self.cost, self.constraint, self.degree, self.options, problem.dimension)
        try:
            self.factor = cho_factor(M)
        except np.linalg.LinAlgError as exc:
            raise IllPosedProblemError(f"augmented system at node {i} is singular") from exc

    def __call__(self, p_new, r_new, x_i, nbr_sum):
        rhs = _quadratic_rhs(
            self.cost, self.constraint, self.options, p_new, r_new, x_i, nbr_sum, self.degree
        )
        return cho_solve(self.factor, rhs)


class _GeneralSolver:
    """Per-node descent-based primal step; carries an adaptive initial step."""

    def __init__(self, problem: ConsensusProblem, i: int):
        self.cost: GeneralCost = problem.costs[i]  # type: ignore[assignment]
        self.constraint = problem.constraints[i]
        self.options = problem.options
        self.inner = problem.inner
        self.degree = len(problem.neighbors[i])
        self.step = 1.0

    def solve_with_midpoints(self, p_new, r_new, x_i, midpoints):
        mid_sum = np.zeros_like(x_i)
        mid_sq = 0.0
        for m in midpoints:
            mid_sum += m
            mid_sq += float(m @ m)
        value, gradient = _augmented_general(
            self.cost, self.constraint, self.options, p_new, r_new, mid_sum, mid_sq, self.degree
        )
        x_new, self.step = minimize_backtracking(value, gradient, x_i, self.inner, self.step)
        return x_new


def initial_states(problem: ConsensusProblem, initial_x) -> list[NodeState]:
    """Fresh states with multipliers at zero (required by the update rules)."""
    n = problem.num_nodes
    initial_x = np.asarray(initial_x, dtype=float)
    if initial_x.ndim == 1:
        per_node = [initial_x.copy() for _ in range(n)]
    else:
        if initial_x.shape != (n, problem.dimension):
            raise ConfigurationError("initial estimates must be (nodes, dimension)")
        per_node = [initial_x[i].copy() for i in range(n)]
    return [
        NodeState(
            x=per_node[i],
            p=np.zeros(problem.dimension),
            r=np.zeros(problem.constraints[i].rows),
        )
        for i in range(n)
    ]


def run_rounds(
    problem: ConsensusProblem,
    initial_x,
    *,
    record_states: bool = False,
    record_transcript: bool = False,
    record_cost: bool = True,
    parallel: bool = False,
) -> tuple[list[np.ndarray], RoundDiagnostics]:
    """Execute the configured number of synchronous rounds.

    Each round takes an immutable snapshot of all estimates (the message
    exchange), then advances every node: p-update, r-update, primal update.
    Nodes may be advanced concurrently (`parallel=True`); the sequential
    path is deterministic and produces identical results.

    Parameters
    ----------
    initial_x : array
        Either one vector shared by all nodes or an (n, dimension) array of
        per-node starting estimates.  Multipliers always start at zero.

    Returns
    -------
    estimates : list of ndarray
        Every node's final copy of the decision vector.
    diagnostics : RoundDiagnostics
    """
    if not problem.is_connected():
        raise ConfigurationError("communication graph is disconnected")
    n = problem.num_nodes
    states = initial_states(problem, initial_x)
    solvers: list[_QuadraticSolver | _GeneralSolver] = [
        _QuadraticSolver(problem, i)
        if isinstance(problem.costs[i], QuadraticCost)
        else _GeneralSolver(problem, i)
        for i in range(n)
    ]
    iters = problem.options.iterations
    a_p, a_r = problem.options.alpha_p, problem.options.alpha_r
    consensus = np.zeros(iters)
    violation = np.zeros((iters, n))
    cost_track = np.zeros((iters, n)) if record_cost else None
    states_track = np.zeros((iters, n, problem.dimension)) if record_states else None
    transcript: list[Message] | None = [] if record_transcript else None

    comm_pairs = [(i, j) for i in range(n) for j in problem.neighbors[i] if i < j]

    def advance(i: int, snapshot: np.ndarray):
        st = states[i]
        nbrs = problem.neighbors[i]
        nbr_sum = np.zeros(problem.dimension)
        diff_sum = np.zeros(problem.dimension)
        for j in nbrs:
            nbr_sum += snapshot[j]
            diff_sum += snapshot[i] - snapshot[j]
        p_new = st.p + a_p * diff_sum
        constraint = problem.constraints[i]
        if constraint.rows:
            r_new = st.r + a_r * (constraint.A @ snapshot[i] - constraint.b)
        else:
            r_new = st.r
        solver = solvers[i]
        if isinstance(solver, _QuadraticSolver):
            x_new = solver(p_new, r_new, snapshot[i], nbr_sum)
        else:
            midpoints = [0.5 * (snapshot[i] + snapshot[j]) for j in nbrs]
            x_new = solver.solve_with_midpoints(p_new, r_new, snapshot[i], midpoints)
        return NodeState(x=x_new, p=p_new, r=r_new)

    for k in range(iters):
        snapshot = np.stack([st.x for st in states])
        if transcript is not None:
            for i in range(n):
                for j in problem.neighbors[i]:
                    transcript.append(Message(k, i, j, snapshot[i].copy()))
        if parallel:
            with concurrent.futures.ThreadPoolExecutor() as pool:
                new_states = list(pool.map(lambda i: advance(i, snapshot), range(n)))
        else:
            new_states = [advance(i, snapshot) for i in range(n)]
        states = new_states
        consensus[k] = max(
            (float(np.linalg.norm(states[i].x - states[j].x)) for i, j in comm_pairs),
            default=0.0,
        )
        for i in range(n):
            violation[k, i] = problem.constraints[i].violation(states[i].x)
            if cost_track is not None:
                cost_track[k, i] = problem.total_cost(states[i].x)
        if states_track is not None:
            states_track[k] = np.stack([st.x for st in states])

    diag = RoundDiagnostics(
        consensus_residual=consensus,
        constraint_violation=violation,
        centralized_cost=cost_track,
        states=states_track,
        transcript=transcript,
    )
    return [st.x for st in states], diag
