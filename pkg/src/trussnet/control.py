"""Velocity-space motion coordination.

The decision variable is the stacked node-velocity vector.  Objectives and
constraints are all linear or quadratic in it, so a control step is one
consensus solve followed by a projection of the agreed velocities onto
edge-rate actuator commands.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .admm import AdmmOptions, ConsensusProblem, LocalConstraint, QuadraticCost
from .core import Configuration, FrameworkGraph, edge_lengths, rigidity_matrix


# --- objectives -------------------------------------------------------------


@dataclass(frozen=True)
class MinEdgeRate:
    """Minimize total squared edge-length rates: favors the least actuation."""


@dataclass(frozen=True)
class NominalTracking:
    """Track the descent direction that pulls edge lengths toward nominal values."""

    nominal_lengths: np.ndarray

    def __post_init__(self):
        lengths = np.asarray(self.nominal_lengths, dtype=float).reshape(-1)
        if np.any(lengths <= 0):
            raise ValueError("nominal lengths must be positive")
        object.__setattr__(self, "nominal_lengths", lengths)


ControlObjective = MinEdgeRate | NominalTracking


# --- constraints ------------------------------------------------------------


@dataclass(frozen=True)
class FeetPinned:
    vertices: tuple[int, ...]


@dataclass(frozen=True)
class NodeVelocity:
    vertex: int
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float).reshape(-1))


@dataclass(frozen=True)
class CenterOfMass:
    """Pin the mass-weighted mean velocity."""

    masses: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "masses", np.asarray(self.masses, dtype=float).reshape(-1))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float).reshape(-1))
        if np.any(self.masses <= 0):
            raise ValueError("masses must be positive")


@dataclass(frozen=True)
class EdgeLimitActive:
    """Linearized length limit: the edge's rate is pinned to zero this step."""

    edge: int
    direction: str  # "at-max" | "at-min"


@dataclass(frozen=True)
class AxisRatePins:
    """Pin single velocity components to zero, e.g. a foot that may only slide."""

    pins: tuple[tuple[int, int], ...]  # (vertex, axis)


@dataclass(frozen=True)
class RawRows:
    A: np.ndarray
    b: np.ndarray


VelocityConstraint = (
    FeetPinned | NodeVelocity | CenterOfMass | EdgeLimitActive | AxisRatePins | RawRows
)


def lower_constraint(
    g: FrameworkGraph, x_hat: Configuration, c: VelocityConstraint
) -> tuple[np.ndarray, np.ndarray]:
    """Lower one velocity constraint to equality rows over the stacked xdot."""
    N = g.n * g.dim
    d = g.dim
    if isinstance(c, FeetPinned):
        rows = []
        for v in c.vertices:
            if not (0 <= v < g.n):
                raise ValueError(f"pinned vertex {v} is not a vertex")
            for axis in range(d):
                row = np.zeros(N)
                row[v * d + axis] = 1.0
                rows.append(row)
        return np.stack(rows), np.zeros(len(rows))
    if isinstance(c, NodeVelocity):
        if not (0 <= c.vertex < g.n):
            raise ValueError(f"commanded vertex {c.vertex} is not a vertex")
        if c.v.size != d:
            raise ValueError("commanded velocity has wrong dimension")
        A = np.zeros((d, N))
        A[:, c.vertex * d : (c.vertex + 1) * d] = np.eye(d)
        return A, c.v.copy()
    if isinstance(c, CenterOfMass):
        if c.masses.size != g.n:
            raise ValueError("need one mass per vertex")
        if c.v.size != d:
            raise ValueError("commanded velocity has wrong dimension")
        total = float(np.sum(c.masses))
        A = np.zeros((d, N))
        for i in range(g.n):
            A[:, i * d : (i + 1) * d] = (c.masses[i] / total) * np.eye(d)
        return A, c.v.copy()
    if isinstance(c, EdgeLimitActive):
        if not (0 <= c.edge < g.num_edges):
            raise ValueError(f"edge index {c.edge} out of range")
        R = rigidity_matrix(g, x_hat)
        return R[c.edge : c.edge + 1].copy(), np.zeros(1)
    if isinstance(c, AxisRatePins):
        rows = []
        for v, axis in c.pins:
            if not (0 <= v < g.n) or not (0 <= axis < d):
                raise ValueError(f"bad pin ({v},{axis})")
            row = np.zeros(N)
            row[v * d + axis] = 1.0
            rows.append(row)
        return np.stack(rows), np.zeros(len(rows))
    if isinstance(c, RawRows):
        A = np.atleast_2d(np.asarray(c.A, dtype=float))
        b = np.asarray(c.b, dtype=float).reshape(-1)
        if A.shape[1] != N or A.shape[0] != b.size:
            raise ValueError("raw constraint rows do not conform")
        return A, b
    raise TypeError(f"unknown velocity constraint {c!r}")


def stack_lowered(
    g: FrameworkGraph, x_hat: Configuration, cs: Sequence[VelocityConstraint]
) -> LocalConstraint:
    if not cs:
        return LocalConstraint.empty(g.n * g.dim)
    blocks = [lower_constraint(g, x_hat, c) for c in cs]
    return LocalConstraint(np.vstack([A for A, _ in blocks]), np.concatenate([b for _, b in blocks]))


# --- objective lowering and problem assembly --------------------------------


def target_velocity(
    g: FrameworkGraph, x_hat: Configuration, nominal_lengths: np.ndarray
) -> np.ndarray:
    """Steepest-descent node velocities for the nominal-length deviation cost.

    Follows the negative gradient of ``0.5 * ||L(x) - L_nominal||^2``; the
    rows of the length-map Jacobian only involve incident edges, so each
    node can evaluate its own block from neighbor positions.
    """
    nominal = np.asarray(nominal_lengths, dtype=float).reshape(-1)
    if nominal.size != g.num_edges:
        raise ValueError("nominal lengths do not conform to the edge list")
    R = rigidity_matrix(g, x_hat)
    return -R.T @ (edge_lengths(g, x_hat) - nominal)


def _min_edge_rate_cost(g: FrameworkGraph, x_hat: Configuration, i: int) -> QuadraticCost:
    R = rigidity_matrix(g, x_hat)
    inc = list(g.incident_edges(i))
    D = np.sqrt(0.5) * R[inc]
    return QuadraticCost(D, np.zeros(len(inc)))


def _tracking_cost(g: FrameworkGraph, x_hat: Configuration, i: int, nominal) -> QuadraticCost:
    d = g.dim
    v_star = target_velocity(g, x_hat, nominal)
    D = np.zeros((d, g.n * d))
    D[:, i * d : (i + 1) * d] = np.eye(d)
    return QuadraticCost(D, -v_star[i * d : (i + 1) * d])


def build_control_problem(
    g: FrameworkGraph,
    x_hat: Configuration | Sequence[Configuration],
    objective: ControlObjective,
    local_constraints: Sequence[Sequence[VelocityConstraint]],
    options: AdmmOptions = AdmmOptions(),
) -> ConsensusProblem:
    """Consensus instance over node velocities.

    Parameters
    ----------
    x_hat : configuration or sequence of configurations
        The shape estimate to linearize at.  A sequence supplies each node's
        own estimate, the fully distributed case; a single vector is shared.
    local_constraints : per-node lists
        Constraint objects held by each node; a constraint is enforced
        globally even when held by a single node.
    """
    if len(local_constraints) != g.n:
        raise ValueError("need one (possibly empty) constraint list per node")
    per_node_x = (
        [np.asarray(x_hat, dtype=float)] * g.n
        if np.ndim(x_hat) == 1
        else [np.asarray(v, dtype=float) for v in x_hat]
    )
    if len(per_node_x) != g.n:
        raise ValueError("need one estimate per node")
    costs = []
    constraints = []
    for i in range(g.n):
        if isinstance(objective, MinEdgeRate):
            costs.append(_min_edge_rate_cost(g, per_node_x[i], i))
        elif isinstance(objective, NominalTracking):
            costs.append(_tracking_cost(g, per_node_x[i], i, objective.nominal_lengths))
        else:
            raise TypeError(f"unknown objective {objective!r}")
        constraints.append(stack_lowered(g, per_node_x[i], local_constraints[i]))
    return ConsensusProblem(
        dimension=g.n * g.dim,
        costs=costs,
        constraints=constraints,
        neighbors=[list(g.neighbors(i)) for i in range(g.n)],
        options=options,
    )


def compute_action(g: FrameworkGraph, x_hat: Configuration, plan: np.ndarray) -> np.ndarray:
    """Edge-rate commands realizing a node-velocity plan: ``R(x_hat) @ plan``."""
    plan = np.asarray(plan, dtype=float).reshape(-1)
    if plan.size != g.n * g.dim:
        raise ValueError("plan does not conform to the graph")
    return rigidity_matrix(g, x_hat) @ plan


def apply_plan(x: Configuration, plan: np.ndarray, dt: float) -> Configuration:
    """Explicit-Euler advance of a configuration along a velocity plan."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return np.asarray(x, dtype=float) + dt * np.asarray(plan, dtype=float)


@dataclass
class EdgeLimitMonitor:
    """Hysteretic active-set tracker for per-edge length limits.

    An edge entering the 2% band around a limit contributes a rate-pinning
    row until it retreats past 3% (1% inside the band).
    """

    g: FrameworkGraph
    min_length: float
    max_length: float
    enter_frac: float = 0.02
    exit_frac: float = 0.03
    active: dict[int, str] = field(default_factory=dict)

    def update(self, x: Configuration) -> list[EdgeLimitActive]:
        L = edge_lengths(self.g, x)
        for k, length in enumerate(L):
            state = self.active.get(k)
            if state == "at-min" and length > self.min_length * (1 + self.exit_frac):
                del self.active[k]
            elif state == "at-max" and length < self.max_length * (1 - self.exit_frac):
                del self.active[k]
            elif state is None:
                if length <= self.min_length * (1 + self.enter_frac):
                    self.active[k] = "at-min"
                elif length >= self.max_length * (1 - self.enter_frac):
                    self.active[k] = "at-max"
        return [EdgeLimitActive(k, s) for k, s in sorted(self.active.items())]
