"""Shape reconstruction from local measurements.

Two problem builders translate raw per-node measurements into a consensus
instance over the stacked node positions:

* relative-position measurements give a quadratic cost (unique minimizer,
  closed-form primal steps), anchored against translation;
* relative-distance measurements give a nonconvex cost with analytic
  gradient, anchored against translation and rotation.

Each edge's residual is split half/half between its endpoint nodes so the
sum of the per-node costs reproduces the centralized objective exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .admm import (
    AdmmOptions,
    ConsensusProblem,
    GeneralCost,
    InnerSolverConfig,
    LocalConstraint,
    QuadraticCost,
    RoundDiagnostics,
    run_rounds,
)
from .core import Configuration, FrameworkGraph, edge_lengths, numeric_rank, positions


class UnderAnchoredError(ValueError):
    """Anchor rows do not pin down the problem's rigid-motion invariance."""


class DisconnectedGraphError(ValueError):
    pass


@dataclass(frozen=True)
class RelativePositionMeasurement:
    """Node i's estimate of where neighbor j sits: ``p_i + v approx p_j``."""

    i: int
    j: int
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float).reshape(-1))


@dataclass(frozen=True)
class DistanceMeasurement:
    """Measured length of one edge (by edge-list index)."""

    edge: int
    length: float

    def __post_init__(self):
        if self.length < 0:
            raise ValueError("measured length must be nonnegative")


# --- anchors ---------------------------------------------------------------


@dataclass(frozen=True)
class AxisPin:
    vertex: int
    axis: int
    value: float


@dataclass(frozen=True)
class AxisPins:
    """Pin selected coordinates of selected vertices to fixed values."""

    pins: tuple[AxisPin, ...]


@dataclass(frozen=True)
class AnchoredNode:
    """Pin one vertex at a known position."""

    vertex: int
    position: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(-1))


@dataclass(frozen=True)
class CentroidAtOrigin:
    """Constrain the mean node position to the origin; rows held by `holder`."""

    holder: int = 0


AnchorSpec = AxisPins | AnchoredNode | CentroidAtOrigin


def anchor_rows(g: FrameworkGraph, spec: AnchorSpec) -> dict[int, LocalConstraint]:
    """Lower an anchor spec to per-node equality blocks over the stacked x."""
    N = g.n * g.dim
    d = g.dim
    rows: dict[int, list[tuple[np.ndarray, float]]] = {}

    def add(node: int, row: np.ndarray, rhs: float):
        rows.setdefault(node, []).append((row, rhs))

    if isinstance(spec, CentroidAtOrigin):
        if not (0 <= spec.holder < g.n):
            raise ValueError(f"anchor holder {spec.holder} is not a vertex")
        for axis in range(d):
            row = np.zeros(N)
            row[axis::d] = 1.0 / g.n
            add(spec.holder, row, 0.0)
    elif isinstance(spec, AnchoredNode):
        if not (0 <= spec.vertex < g.n):
            raise ValueError(f"anchor vertex {spec.vertex} is not a vertex")
        if spec.position.size != d:
            raise ValueError("anchored position has wrong dimension")
        for axis in range(d):
            row = np.zeros(N)
            row[spec.vertex * d + axis] = 1.0
            add(spec.vertex, row, float(spec.position[axis]))
    elif isinstance(spec, AxisPins):
        for pin in spec.pins:
            if not (0 <= pin.vertex < g.n):
                raise ValueError(f"pin vertex {pin.vertex} is not a vertex")
            if not (0 <= pin.axis < d):
                raise ValueError(f"pin axis {pin.axis} out of range for dim {d}")
            row = np.zeros(N)
            row[pin.vertex * d + pin.axis] = 1.0
            add(pin.vertex, row, pin.value)
    else:
        raise TypeError(f"unknown anchor spec {spec!r}")

    out = {}
    for node, pairs in rows.items():
        A = np.stack([r for r, _ in pairs])
        b = np.array([v for _, v in pairs])
        out[node] = LocalConstraint(A, b)
    return out


def _stacked_anchor_rank(g: FrameworkGraph, per_node: dict[int, LocalConstraint]) -> int:
    blocks = [c.A for c in per_node.values() if c.rows]
    if not blocks:
        return 0
    return numeric_rank(np.vstack(blocks))


def _constraints_list(
    g: FrameworkGraph, per_node: dict[int, LocalConstraint]
) -> list[LocalConstraint]:
    N = g.n * g.dim
    return [per_node.get(i, LocalConstraint.empty(N)) for i in range(g.n)]


# --- problem builders ------------------------------------------------------


def build_position_problem(
    g: FrameworkGraph,
    measurements: Sequence[RelativePositionMeasurement],
    anchors: AnchorSpec,
    options: AdmmOptions = AdmmOptions(),
) -> ConsensusProblem:
    """Quadratic reconstruction problem from relative-position measurements.

    Node i's cost sums ``||p_j - p_i - v_ij||^2`` over its own outgoing
    measurements.  If a direction is missing it is synthesized as the
    negation of the reverse one.  Anchor rows are held only by the anchored
    nodes.
    """
    if not g.is_connected():
        raise DisconnectedGraphError("relative positions determine shape only on a connected graph")
    N = g.n * g.dim
    d = g.dim
    directed: dict[tuple[int, int], np.ndarray] = {}
    for m in measurements:
        g.edge_index(m.i, m.j)  # KeyError when {i,j} is not an edge
        if m.v.size != d:
            raise ValueError(f"measurement ({m.i},{m.j}) has wrong dimension")
        directed[(m.i, m.j)] = m.v
    for (i, j), v in list(directed.items()):
        directed.setdefault((j, i), -v)

    costs = []
    for i in range(g.n):
        nbrs = g.neighbors(i)
        D = np.zeros((d * len(nbrs), N))
        f = np.zeros(d * len(nbrs))
        for t, j in enumerate(nbrs):
            if (i, j) not in directed:
                raise ValueError(f"no measurement for edge ({i + 1},{j + 1}) in either direction")
            sl = slice(t * d, (t + 1) * d)
            D[sl, j * d : (j + 1) * d] = np.eye(d)
            D[sl, i * d : (i + 1) * d] = -np.eye(d)
            f[sl] = -directed[(i, j)]
        costs.append(QuadraticCost(D, f))

    per_node = anchor_rows(g, anchors)
    if _stacked_anchor_rank(g, per_node) < d:
        raise UnderAnchoredError(f"need at least {d} independent anchor rows to fix translation")
    return ConsensusProblem(
        dimension=N,
        costs=costs,
        constraints=_constraints_list(g, per_node),
        neighbors=[list(g.neighbors(i)) for i in range(g.n)],
        options=options,
    )


def _node_distance_cost(
    g: FrameworkGraph, i: int, measured: dict[int, float]
) -> GeneralCost:
    inc = [k for k in g.incident_edges(i) if k in measured]
    ends_a = np.array([g.edges[k][0] for k in inc], dtype=int)
    ends_b = np.array([g.edges[k][1] for k in inc], dtype=int)
    target = np.array([measured[k] for k in inc])
    d = g.dim

    def value(x: np.ndarray) -> float:
        p = x.reshape(g.n, d)
        lens = np.linalg.norm(p[ends_a] - p[ends_b], axis=1)
        res = lens - target
        return 0.5 * float(res @ res)

    def gradient(x: np.ndarray) -> np.ndarray:
        p = x.reshape(g.n, d)
        diff = p[ends_a] - p[ends_b]
        lens = np.linalg.norm(diff, axis=1)
        safe = np.where(lens > 1e-12, lens, 1.0)
        u = diff / safe[:, None]
        res = lens - target
        grad = np.zeros((g.n, d))
        np.add.at(grad, ends_a, res[:, None] * u)
        np.add.at(grad, ends_b, -res[:, None] * u)
        return grad.reshape(-1)

    return GeneralCost(value=value, gradient=gradient)


def build_distance_problem(
    g: FrameworkGraph,
    measurements: Sequence[DistanceMeasurement],
    anchors: AnchorSpec,
    options: AdmmOptions = AdmmOptions(),
    inner: InnerSolverConfig = InnerSolverConfig(),
) -> ConsensusProblem:
    """Nonconvex reconstruction problem from per-edge length measurements.

    Every edge residual appears in both endpoint costs with weight 1/2, so
    the per-node costs partition the total squared-residual objective.
    Requires enough anchor rows to pin both translation and rotation.
    """
    d = g.dim
    measured: dict[int, float] = {}
    for m in measurements:
        if not (0 <= m.edge < g.num_edges):
            raise ValueError(f"edge index {m.edge} out of range")
        if m.edge in measured:
            raise ValueError(f"duplicate measurement for edge {m.edge}")
        measured[m.edge] = m.length

    per_node = anchor_rows(g, anchors)
    needed = d * (d + 1) // 2
    if _stacked_anchor_rank(g, per_node) < needed:
        raise UnderAnchoredError(
            f"need at least {needed} independent anchor rows to fix translation and rotation"
        )
    costs = [_node_distance_cost(g, i, measured) for i in range(g.n)]
    return ConsensusProblem(
        dimension=g.n * d,
        costs=costs,
        constraints=_constraints_list(g, per_node),
        neighbors=[list(g.neighbors(i)) for i in range(g.n)],
        options=options,
        inner=inner,
    )


# --- running and grading ---------------------------------------------------


def mean_node_error(g: FrameworkGraph, estimate: Configuration, truth: Configuration) -> float:
    """Average distance between estimated and true node positions."""
    pe = positions(g, estimate)
    pt = positions(g, truth)
    return float(np.mean(np.linalg.norm(pe - pt, axis=1)))


@dataclass
class EstimationResult:
    estimates: list[np.ndarray]
    diagnostics: RoundDiagnostics
    error: float | None


def estimate_state(
    problem: ConsensusProblem,
    g: FrameworkGraph,
    initial_guess: Configuration,
    truth: Configuration | None = None,
    **run_kwargs,
) -> EstimationResult:
    """Run the consensus rounds and, when truth is known, grade node 1's copy."""
    estimates, diag = run_rounds(problem, np.asarray(initial_guess, dtype=float), **run_kwargs)
    error = None
    if truth is not None:
        error = mean_node_error(g, estimates[0], truth)
    return EstimationResult(estimates=estimates, diagnostics=diag, error=error)


@dataclass(frozen=True)
class SolutionReport:
    converged_to_truth: bool
    mean_node_error: float
    max_length_residual: float
    length_consistent: bool

    @property
    def label(self) -> str:
        return "converged-to-truth" if self.converged_to_truth else "alternate-minimum"


def classify_solution(
    g: FrameworkGraph,
    estimate: Configuration,
    truth: Configuration,
    measured_lengths: np.ndarray,
    tol: float = 0.05,
    length_tol: float = 1e-3,
) -> SolutionReport:
    """Grade an estimate as the true shape or an alternate length-consistent one.

    An estimate far from the truth but with near-zero length residuals is a
    genuine alternate minimum of the distance cost; a large residual flags a
    non-converged iterate instead.
    """
    err = mean_node_error(g, estimate, truth)
    resid = float(np.max(np.abs(edge_lengths(g, estimate) - np.asarray(measured_lengths))))
    return SolutionReport(
        converged_to_truth=err <= tol,
        mean_node_error=err,
        max_length_residual=resid,
        length_consistent=resid <= length_tol,
    )
