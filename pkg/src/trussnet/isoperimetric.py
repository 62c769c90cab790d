"""Constant-perimeter tube robots.

The robot is a single inflated tube routed along the edges of a graph;
motorized roller modules slide along it, growing one edge while shrinking
the next, so the total tube length never changes.  Two model levels:

* the graph level, where each module is a point and encoder readings map
  linearly to edge lengths (``L = B r + c``);
* the expanded level, where each module occupies three kinematic points
  (top connection A and pinch points B, C) tied together by fixed-distance
  and angle-bisection constraints.
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
)
from .control import ControlObjective, MinEdgeRate, NominalTracking, VelocityConstraint, stack_lowered
from .core import Configuration, FrameworkGraph, edge_lengths, edge_rate_map, rigidity_matrix
from .estimation import UnderAnchoredError


class KinematicViolationError(ValueError):
    """Roller positions are out of range or out of order along the tube."""


class UndefinedAngleError(ValueError):
    """Coincident points make an angle (and the bisection residual) undefined."""


class InfeasibleConstraintStackError(ValueError):
    """The stacked velocity-constraint rows admit no solution."""


# --- graph-level tube kinematics --------------------------------------------


@dataclass(frozen=True)
class TubeLayout:
    """Routing of the tube: a closed walk covering every edge exactly once.

    The walk starts and ends at a passive vertex that holds both tube ends.
    Every interior visit is a motorized roller; roller order along the tube
    is walk order.  Edge lengths are affine in the roller positions r
    (tube-arc distance from the tube's start): ``L = B r + c`` with one +1/-1
    pair per B column, so every column sums to zero and the total length
    ``1^T L`` is independent of r.
    """

    g: FrameworkGraph
    walk: tuple[int, ...]
    total_length: float

    def __post_init__(self):
        w = tuple(int(v) for v in self.walk)
        object.__setattr__(self, "walk", w)
        if len(w) < 3 or w[0] != w[-1]:
            raise ValueError("tube walk must be a closed vertex sequence")
        if self.total_length <= 0:
            raise ValueError("total tube length must be positive")
        used = []
        for t in range(len(w) - 1):
            used.append(self.g.edge_index(w[t], w[t + 1]))  # KeyError if not an edge
        if sorted(used) != list(range(self.g.num_edges)):
            raise ValueError("tube walk must cover every edge exactly once")
        interior = w[1:-1]
        if w[0] in interior:
            raise ValueError("the tube-end vertex must be passive (not revisited)")
        object.__setattr__(self, "_walk_edges", tuple(used))

    @property
    def walk_edges(self) -> tuple[int, ...]:
        """Graph edge index of each walk step."""
        return self._walk_edges  # type: ignore[attr-defined]

    @property
    def rollers(self) -> tuple[int, ...]:
        """Motorized vertices in tube order."""
        return self.walk[1:-1]

    @property
    def num_rollers(self) -> int:
        return len(self.walk) - 2

    def incidence(self) -> tuple[np.ndarray, np.ndarray]:
        """The (B, c) pair with ``L = B r + c``, rows in graph edge order."""
        m = self.g.num_edges
        B = np.zeros((m, self.num_rollers))
        c = np.zeros(m)
        for t, k in enumerate(self.walk_edges):
            if t > 0:
                B[k, t - 1] -= 1.0
            if t < len(self.walk) - 2:
                B[k, t] += 1.0
            else:
                c[k] += self.total_length
        return B, c


def lengths_from_rollers(layout: TubeLayout, r: np.ndarray) -> np.ndarray:
    """Edge lengths implied by roller positions, in graph edge order.

    The closing edge's length is inferred from the constant total length.
    """
    r = np.asarray(r, dtype=float).reshape(-1)
    if r.size != layout.num_rollers:
        raise ValueError("need one position per roller")
    bad = r.size and (r[0] < 0 or r[-1] > layout.total_length or np.any(np.diff(r) < 0))
    if bad:
        raise KinematicViolationError("rollers out of range or passing each other")
    B, c = layout.incidence()
    return B @ r + c


def roller_rates(
    layout: TubeLayout, g: FrameworkGraph, x: Configuration, xdot: np.ndarray
) -> np.ndarray:
    """Roller speeds along the tube realizing a node-velocity plan.

    Solves ``B rdot = Ldot`` in least squares; the solution is exact exactly
    when the plan conserves total length (``1^T Ldot = 0``).
    """
    ldot = edge_rate_map(g, x, xdot)
    B, _ = layout.incidence()
    rdot, *_ = np.linalg.lstsq(B, ldot, rcond=None)
    return rdot


def perimeter_constraint_row(
    g: FrameworkGraph, x: Configuration, edge_subset: Sequence[int] | None = None
) -> tuple[np.ndarray, float]:
    """Single velocity-space row enforcing constant total edge length.

    Holding it requires only knowledge of the total tube length, so it can
    be assigned to any one node.
    """
    R = rigidity_matrix(g, x)
    if edge_subset is None:
        row = R.sum(axis=0)
    else:
        row = R[list(edge_subset)].sum(axis=0)
    return row, 0.0


# --- roller-module geometry --------------------------------------------------


def _cosine_and_grads(u: np.ndarray, v: np.ndarray):
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu < 1e-12 or nv < 1e-12:
        raise UndefinedAngleError("coincident points: angle undefined")
    c = float(u @ v) / (nu * nv)
    dc_du = v / (nu * nv) - c * u / nu**2
    dc_dv = u / (nu * nv) - c * v / nv**2
    return c, dc_du, dc_dv


def bisection_residual(p_b, p_c, p_d, p_e) -> float:
    """Difference of the two tube-bend cosines at a module's pinch points.

    Zero exactly when the module's top point lies on the bisector of its two
    incident tube edges (d--b entering at b, c--e leaving at c).
    """
    p_b, p_c, p_d, p_e = (np.asarray(p, dtype=float) for p in (p_b, p_c, p_d, p_e))
    c1, _, _ = _cosine_and_grads(p_d - p_b, p_c - p_b)
    c2, _, _ = _cosine_and_grads(p_e - p_c, p_b - p_c)
    return c1 - c2


def _bisection_residual_grads(p_b, p_c, p_d, p_e):
    """Residual and its gradients w.r.t. the four points."""
    c1, d1_du, d1_dv = _cosine_and_grads(p_d - p_b, p_c - p_b)
    c2, d2_dw, d2_dz = _cosine_and_grads(p_e - p_c, p_b - p_c)
    g_d = d1_du
    g_e = -d2_dw
    g_b = -d1_du - d1_dv - d2_dz
    g_c = d1_dv + d2_dw + d2_dz
    return c1 - c2, g_b, g_c, g_d, g_e


@dataclass(frozen=True)
class RollerModuleGeometry:
    """Fixed body dimensions of one motorized module.

    ``arm_length`` is the distance from the top connection point to each
    pinch point; ``pinch_separation`` the distance between the pinch points;
    ``tube_inside`` the tube-arc length captured between them (a device
    constant that the encoder accounting must skip over).
    """

    vertex: int
    arm_length: float
    pinch_separation: float
    tube_inside: float | None = None

    def __post_init__(self):
        if self.arm_length <= 0 or self.pinch_separation <= 0:
            raise ValueError("module dimensions must be positive")
        if self.arm_length <= self.pinch_separation / 2:
            raise ValueError("arm must reach past the midpoint of the pinch points")
        if self.tube_inside is None:
            object.__setattr__(self, "tube_inside", self.pinch_separation)


class ExpandedTubeRobot:
    """Kinematic model with three points per module (top A, pinches B and C).

    Points are stacked per simple-graph vertex: a passive vertex contributes
    one point, a motorized vertex the triple (A, B, C).  Tube segments run
    from each module's downstream pinch to the next module's upstream pinch;
    rigid edges tie each module's own points together.
    """

    def __init__(self, layout: TubeLayout, modules: Sequence[RollerModuleGeometry]):
        self.layout = layout
        by_vertex = {m.vertex: m for m in modules}
        if sorted(by_vertex) != sorted(set(layout.rollers)):
            raise ValueError("modules must cover exactly the motorized vertices")
        if len(set(layout.rollers)) != len(layout.rollers):
            raise ValueError("one module per vertex: repeated tube visits unsupported")
        self.modules = tuple(by_vertex[v] for v in layout.rollers)  # tube order
        g = layout.g
        self.simple = g

        point_of: dict[tuple[int, str], int] = {}
        owner: list[int] = []
        labels: list[str] = []
        for v in range(g.n):
            roles = ("A", "B", "C") if v in by_vertex else ("P",)
            for role in roles:
                point_of[(v, role)] = len(owner)
                owner.append(v)
                labels.append(f"{role}{v + 1}")
        self.point_of = point_of
        self.point_owner = tuple(owner)
        self.point_labels = tuple(labels)
        self.num_points = len(owner)

        walk = layout.walk
        seg_edges = []
        for t in range(len(walk) - 1):
            a, b = walk[t], walk[t + 1]
            start = point_of[(a, "C")] if a in by_vertex else point_of[(a, "P")]
            end = point_of[(b, "B")] if b in by_vertex else point_of[(b, "P")]
            seg_edges.append((start, end))
        rigid_edges = []
        self.rigid_targets = []
        for m in self.modules:
            A = point_of[(m.vertex, "A")]
            B = point_of[(m.vertex, "B")]
            C = point_of[(m.vertex, "C")]
            rigid_edges += [(A, B), (A, C), (B, C)]
            self.rigid_targets += [m.arm_length, m.arm_length, m.pinch_separation]
        self.segment_edge_indices = tuple(range(len(seg_edges)))
        self.graph = FrameworkGraph(self.num_points, tuple(seg_edges + rigid_edges), g.dim)
        self.dimension = self.num_points * g.dim
        # far endpoints (d, e) of the tube edges meeting each module's pinches
        self.bisection_points = []
        for idx, m in enumerate(self.modules):
            d_pt = seg_edges[idx][0]        # segment idx ends at this module's B
            e_pt = seg_edges[idx + 1][1]    # segment idx+1 starts at this module's C
            self.bisection_points.append(
                (point_of[(m.vertex, "B")], point_of[(m.vertex, "C")], d_pt, e_pt)
            )
        self.internal_length = float(sum(m.tube_inside for m in self.modules))
        self.free_length = layout.total_length - self.internal_length
        if self.free_length <= 0:
            raise ValueError("modules occupy more tube than the total length")

    # -- bookkeeping helpers

    def points(self, x: Configuration) -> np.ndarray:
        return self.graph.check_configuration(x).reshape(self.num_points, self.simple.dim)

    def owned_indices(self, vertex: int) -> np.ndarray:
        """Stacked-coordinate indices of the points owned by one vertex."""
        d = self.simple.dim
        idx = [p for p, o in enumerate(self.point_owner) if o == vertex]
        return np.concatenate([np.arange(p * d, (p + 1) * d) for p in idx])

    def segment_lengths(self, x: Configuration) -> np.ndarray:
        return edge_lengths(self.graph, x)[: len(self.segment_edge_indices)]

    def perimeter_length(self, x: Configuration) -> float:
        """Total tube length: free segments plus the fixed in-module arcs."""
        return float(np.sum(self.segment_lengths(x))) + self.internal_length

    # -- encoders

    def incidence(self) -> tuple[np.ndarray, np.ndarray]:
        """(B, c) with segment lengths = B r + c over roller positions r."""
        num_seg = len(self.segment_edge_indices)
        B = np.zeros((num_seg, len(self.modules)))
        c = np.zeros(num_seg)
        for t in range(num_seg):
            if t > 0:
                B[t, t - 1] -= 1.0
                c[t] -= self.modules[t - 1].tube_inside
            if t < len(self.modules):
                B[t, t] += 1.0
            else:
                c[t] += self.layout.total_length
        return B, c

    def encoder_readings(self, x: Configuration) -> np.ndarray:
        """Tube-arc distance of each module's upstream pinch from the tube start."""
        segs = self.segment_lengths(x)
        r = []
        coord = 0.0
        for t, m in enumerate(self.modules):
            coord += segs[t]
            r.append(coord)
            coord += m.tube_inside
        return np.array(r)

    def segment_lengths_from_encoders(self, r: np.ndarray) -> np.ndarray:
        """Measured free-segment lengths implied by encoder readings.

        The final segment is inferred from the constant total tube length.
        """
        r = np.asarray(r, dtype=float).reshape(-1)
        if r.size != len(self.modules):
            raise ValueError("need one reading per module")
        B, c = self.incidence()
        segs = B @ r + c
        if np.any(segs < 0):
            raise KinematicViolationError("encoder readings out of order along the tube")
        return segs

    def roller_rates(self, x: Configuration, xdot: np.ndarray) -> np.ndarray:
        """Roller speeds realizing an expanded-state velocity plan."""
        seg_rates = edge_rate_map(self.graph, x, xdot)[: len(self.segment_edge_indices)]
        B, _ = self.incidence()
        rdot, *_ = np.linalg.lstsq(B, seg_rates, rcond=None)
        return rdot

    # -- module constraints

    def module_residuals(self, x: Configuration, idx: int) -> np.ndarray:
        """One module's residuals: three fixed distances and the bisection."""
        p = self.points(x)
        m = self.modules[idx]
        b, c, d_pt, e_pt = self.bisection_points[idx]
        a_pt = self.point_of[(m.vertex, "A")]
        return np.array(
            [
                np.linalg.norm(p[a_pt] - p[b]) - m.arm_length,
                np.linalg.norm(p[a_pt] - p[c]) - m.arm_length,
                np.linalg.norm(p[b] - p[c]) - m.pinch_separation,
                bisection_residual(p[b], p[c], p[d_pt], p[e_pt]),
            ]
        )

    def module_q_rows(self, x: Configuration, idx: int) -> np.ndarray:
        """The four Jacobian rows belonging to one module (by tube order)."""
        p = self.points(x)
        d = self.simple.dim
        m = self.modules[idx]
        b, c, d_pt, e_pt = self.bisection_points[idx]
        a_pt = self.point_of[(m.vertex, "A")]
        rows = np.zeros((4, self.dimension))

        def length_row(row, i, j):
            diff = p[i] - p[j]
            nrm = np.linalg.norm(diff)
            if nrm < 1e-12:
                raise UndefinedAngleError("coincident module points")
            u = diff / nrm
            rows[row, i * d : (i + 1) * d] = u
            rows[row, j * d : (j + 1) * d] = -u

        length_row(0, a_pt, b)
        length_row(1, a_pt, c)
        length_row(2, b, c)
        _, g_b, g_c, g_d, g_e = _bisection_residual_grads(p[b], p[c], p[d_pt], p[e_pt])
        for pt, grad in ((b, g_b), (c, g_c), (d_pt, g_d), (e_pt, g_e)):
            rows[3, pt * d : (pt + 1) * d] += grad
        return rows

    def q_residuals(self, x: Configuration) -> np.ndarray:
        """Fixed-distance and bisection residuals, four per module."""
        if not self.modules:
            return np.zeros(0)
        return np.concatenate(
            [self.module_residuals(x, idx) for idx in range(len(self.modules))]
        )

    def q_jacobian(self, x: Configuration) -> np.ndarray:
        """Analytic Jacobian of :meth:`q_residuals`."""
        if not self.modules:
            return np.zeros((0, self.dimension))
        return np.vstack([self.module_q_rows(x, idx) for idx in range(len(self.modules))])

    def perimeter_row(self, x: Configuration) -> np.ndarray:
        """Velocity row whose kernel preserves the total tube length."""
        R = rigidity_matrix(self.graph, x)
        return R[: len(self.segment_edge_indices)].sum(axis=0)

    # -- configuration construction

    def expand_configuration(self, simple_x: Configuration) -> Configuration:
        """Place module points consistently around each simple-graph vertex.

        Pinch points sit symmetrically on the two incident tube edges, the
        top point outward on the angle bisector, which satisfies every
        module constraint exactly.
        """
        ps = self.simple.check_configuration(simple_x).reshape(self.simple.n, self.simple.dim)
        out = np.zeros((self.num_points, self.simple.dim))
        walk = self.layout.walk
        by_vertex = {m.vertex: m for m in self.modules}
        for v in range(self.simple.n):
            if v not in by_vertex:
                out[self.point_of[(v, "P")]] = ps[v]
        for t in range(1, len(walk) - 1):
            v = walk[t]
            m = by_vertex[v]
            prev_v, next_v = walk[t - 1], walk[t + 1]
            e_prev = ps[prev_v] - ps[v]
            e_next = ps[next_v] - ps[v]
            e_prev = e_prev / np.linalg.norm(e_prev)
            e_next = e_next / np.linalg.norm(e_next)
            gap = np.linalg.norm(e_prev - e_next)
            if gap < 1e-12:
                raise UndefinedAngleError(f"straight tube at vertex {v + 1}: bisector undefined")
            beta = m.pinch_separation / gap
            bis = e_prev + e_next
            bis = bis / np.linalg.norm(bis)
            cos_half = float(bis @ e_prev)
            disc = beta**2 * cos_half**2 - beta**2 + m.arm_length**2
            if disc <= 0:
                raise ValueError(f"module at vertex {v + 1} cannot reach around the bend")
            a = -beta * cos_half + np.sqrt(disc)
            out[self.point_of[(v, "B")]] = ps[v] + beta * e_prev
            out[self.point_of[(v, "C")]] = ps[v] + beta * e_next
            out[self.point_of[(v, "A")]] = ps[v] - a * bis
        return out.reshape(-1)

    def repair_constraints(
        self, x: Configuration, trigger: float = 1e-4, max_steps: int = 1
    ) -> Configuration:
        """Gauss-Newton pull-back onto the module + perimeter constraint manifold.

        The hardware enforces these mechanically; explicit integration needs
        an explicit nudge whenever drift exceeds `trigger`.
        """
        x = np.array(x, dtype=float)
        for _ in range(max_steps):
            rho = np.append(self.q_residuals(x), self.perimeter_length(x) - self.layout.total_length)
            if float(np.max(np.abs(rho))) <= trigger:
                break
            J = np.vstack([self.q_jacobian(x), self.perimeter_row(x)])
            step, *_ = np.linalg.lstsq(J, rho, rcond=None)
            x -= step
        return x


def constraint_jacobian_Q(robot: ExpandedTubeRobot, x: Configuration) -> np.ndarray:
    """Stacked gradients of every module residual (fixed distances + bisection)."""
    return robot.q_jacobian(x)


# --- consensus problem builders ----------------------------------------------


def _node_iso_estimation_cost(
    robot: ExpandedTubeRobot, vertex: int, seg_measured: np.ndarray, q_weight: float
) -> GeneralCost:
    g = robot.graph
    d = g.dim
    n_nodes = robot.simple.n
    num_seg = len(robot.segment_edge_indices)
    seg_pairs = [g.edges[t] for t in range(num_seg)]
    owner = robot.point_owner
    adjacent = [
        t for t, (a, b) in enumerate(seg_pairs) if vertex in (owner[a], owner[b])
    ]
    module_idx = next(
        (i for i, m in enumerate(robot.modules) if m.vertex == vertex), None
    )
    target = seg_measured[adjacent]
    ia = np.array([seg_pairs[t][0] for t in adjacent], dtype=int)
    ib = np.array([seg_pairs[t][1] for t in adjacent], dtype=int)
    all_a = np.array([a for a, _ in seg_pairs], dtype=int)
    all_b = np.array([b for _, b in seg_pairs], dtype=int)
    free_length = robot.free_length

    def value(x: np.ndarray) -> float:
        p = x.reshape(robot.num_points, d)
        lens = np.linalg.norm(p[ia] - p[ib], axis=1)
        res = lens - target
        v = 0.5 * float(res @ res)
        total = float(np.sum(np.linalg.norm(p[all_a] - p[all_b], axis=1)))
        v += (free_length - total) ** 2 / n_nodes
        if module_idx is not None:
            q = robot.module_residuals(x, module_idx)
            v += q_weight * float(q @ q)
        return v

    def gradient(x: np.ndarray) -> np.ndarray:
        p = x.reshape(robot.num_points, d)
        grad = np.zeros((robot.num_points, d))
        diff = p[ia] - p[ib]
        lens = np.linalg.norm(diff, axis=1)
        u = diff / np.where(lens > 1e-12, lens, 1.0)[:, None]
        res = lens - target
        np.add.at(grad, ia, res[:, None] * u)
        np.add.at(grad, ib, -res[:, None] * u)
        diff_all = p[all_a] - p[all_b]
        lens_all = np.linalg.norm(diff_all, axis=1)
        u_all = diff_all / np.where(lens_all > 1e-12, lens_all, 1.0)[:, None]
        total = float(np.sum(lens_all))
        coef = -2.0 * (free_length - total) / n_nodes
        np.add.at(grad, all_a, coef * u_all)
        np.add.at(grad, all_b, -coef * u_all)
        flat = grad.reshape(-1)
        if module_idx is not None:
            q = robot.module_residuals(x, module_idx)
            J = robot.module_q_rows(x, module_idx)
            flat = flat + 2.0 * q_weight * (J.T @ q)
        return flat

    return GeneralCost(value=value, gradient=gradient)


def build_isoperimetric_estimation_problem(
    robot: ExpandedTubeRobot,
    encoder_r: np.ndarray,
    anchors: dict[int, LocalConstraint],
    options: AdmmOptions = AdmmOptions(),
    inner: InnerSolverConfig = InnerSolverConfig(),
    q_weight: float = 1.0,
) -> ConsensusProblem:
    """Shape estimation for the expanded robot from encoder readings.

    Encoder readings are converted to measured segment lengths (the closing
    segment inferred from the constant total length).  Each node's cost sums
    its adjacent segment residuals (half-weighted), its share of the squared
    total-length residual, and its own module's constraint residuals as
    penalties.  ``anchors`` maps vertex -> equality block over the expanded
    state and must fix translation and rotation.
    """
    seg_measured = robot.segment_lengths_from_encoders(encoder_r)
    simple = robot.simple
    blocks = [c.A for c in anchors.values() if c.rows]
    stacked = np.vstack(blocks) if blocks else np.zeros((0, robot.dimension))
    needed = simple.dim * (simple.dim + 1) // 2
    if stacked.shape[0] == 0 or np.linalg.matrix_rank(stacked) < needed:
        raise UnderAnchoredError(
            f"need at least {needed} independent anchor rows on the expanded state"
        )
    costs = [
        _node_iso_estimation_cost(robot, v, seg_measured, q_weight) for v in range(simple.n)
    ]
    constraints = [anchors.get(v, LocalConstraint.empty(robot.dimension)) for v in range(simple.n)]
    return ConsensusProblem(
        dimension=robot.dimension,
        costs=costs,
        constraints=constraints,
        neighbors=[list(simple.neighbors(i)) for i in range(simple.n)],
        options=options,
        inner=inner,
    )


def _expanded_edge_rate_cost(robot: ExpandedTubeRobot, vertex: int, x_hat) -> QuadraticCost:
    g = robot.graph
    R = rigidity_matrix(g, x_hat)
    owner = robot.point_owner
    rows = []
    for k, (a, b) in enumerate(g.edges):
        owners = {owner[a], owner[b]}
        if vertex in owners:
            w = 1.0 if len(owners) == 1 else 0.5
            rows.append(np.sqrt(w) * R[k])
    D = np.stack(rows) if rows else np.zeros((0, robot.dimension))
    return QuadraticCost(D, np.zeros(D.shape[0]))


def build_isoperimetric_control_problem(
    robot: ExpandedTubeRobot,
    x_hat: Configuration,
    objective: ControlObjective,
    local_constraints: Sequence[Sequence[VelocityConstraint]],
    options: AdmmOptions = AdmmOptions(),
    perimeter_holders: Sequence[int] | None = None,
) -> ConsensusProblem:
    """Velocity coordination over the expanded state.

    Every module holds its own constraint-Jacobian rows; the perimeter row
    is held by `perimeter_holders` (default: the passive tube-end vertex).
    User constraints reference expanded points and are stacked onto the
    rows of whichever vertex holds them.
    """
    simple = robot.simple
    if len(local_constraints) != simple.n:
        raise ValueError("need one (possibly empty) constraint list per vertex")
    if perimeter_holders is None:
        perimeter_holders = (robot.layout.walk[0],)
    x_hat = robot.graph.check_configuration(x_hat)

    costs = []
    constraints = []
    perim = robot.perimeter_row(x_hat)
    for v in range(simple.n):
        if isinstance(objective, MinEdgeRate):
            costs.append(_expanded_edge_rate_cost(robot, v, x_hat))
        elif isinstance(objective, NominalTracking):
            raise TypeError("nominal tracking is defined on the simple graph, not tube robots")
        else:
            raise TypeError(f"unknown objective {objective!r}")
        lowered = stack_lowered(robot.graph, x_hat, local_constraints[v])
        rows = [lowered.A] if lowered.rows else []
        rhs = [lowered.b] if lowered.rows else []
        module_idx = next((i for i, m in enumerate(robot.modules) if m.vertex == v), None)
        if module_idx is not None:
            qrows = robot.module_q_rows(x_hat, module_idx)
            rows.append(qrows)
            rhs.append(np.zeros(qrows.shape[0]))
        if v in perimeter_holders:
            rows.append(perim[None, :])
            rhs.append(np.zeros(1))
        if rows:
            constraints.append(LocalConstraint(np.vstack(rows), np.concatenate(rhs)))
        else:
            constraints.append(LocalConstraint.empty(robot.dimension))

    A_all = np.vstack([c.A for c in constraints if c.rows])
    b_all = np.concatenate([c.b for c in constraints if c.rows])
    if A_all.size:
        rank_a = np.linalg.matrix_rank(A_all)
        rank_ab = np.linalg.matrix_rank(np.column_stack([A_all, b_all]))
        if rank_ab > rank_a:
            raise InfeasibleConstraintStackError("stacked velocity constraints are inconsistent")

    return ConsensusProblem(
        dimension=robot.dimension,
        costs=costs,
        constraints=constraints,
        neighbors=[list(simple.neighbors(i)) for i in range(simple.n)],
        options=options,
    )
