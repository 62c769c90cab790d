"""Scenario executor: measure, estimate, coordinate, act, integrate.

Each simulation step mirrors one pass of the control loop running on the
robot: every node takes (synthetic, seeded) measurements, the group runs
consensus rounds to agree on the robot's shape, then a second set of rounds
to agree on node velocities under the locally held constraints, and the
agreed motion is applied to the true configuration.  Control is computed
from the estimates but applied to the truth, so estimation error feeds
back into the trajectory exactly as it would on hardware.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .admm import LocalConstraint, run_rounds
from .control import (
    AxisRatePins,
    EdgeLimitActive,
    EdgeLimitMonitor,
    FeetPinned,
    NodeVelocity,
    build_control_problem,
    lower_constraint,
)
from .core import edge_lengths, rigidity_matrix
from .estimation import (
    DistanceMeasurement,
    RelativePositionMeasurement,
    build_distance_problem,
    build_position_problem,
)
from .isoperimetric import build_isoperimetric_control_problem, build_isoperimetric_estimation_problem
from .scenario import Scenario


def synthesize_measurements(scenario: Scenario, true_x: np.ndarray, rng: np.random.Generator):
    """Exact measurements from the true configuration plus seeded Gaussian noise.

    Relative positions get independent per-component noise for each directed
    measurement; lengths get one scalar draw per edge, clamped at zero;
    encoder readings get one draw per roller, kept in tube order.
    """
    sigma = scenario.noise_std
    mode = scenario.measurement_mode
    if mode == "relative-position":
        g = scenario.graph
        p = true_x.reshape(g.n, g.dim)
        out = []
        for i in range(g.n):
            for j in g.neighbors(i):
                noise = sigma * rng.standard_normal(g.dim) if sigma > 0 else 0.0
                out.append(RelativePositionMeasurement(i, j, p[j] - p[i] + noise))
        return out
    if mode == "relative-distance":
        g = scenario.graph
        L = edge_lengths(g, true_x)
        if sigma > 0:
            L = np.clip(L + sigma * rng.standard_normal(g.num_edges), 0.0, None)
        return [DistanceMeasurement(k, float(L[k])) for k in range(g.num_edges)]
    if mode == "encoder":
        robot = scenario.tube
        r = robot.encoder_readings(true_x)
        if sigma > 0:
            r = r + sigma * rng.standard_normal(r.size)
            r = np.maximum.accumulate(np.clip(r, 0.0, robot.layout.total_length))
        return r
    raise ValueError(f"unknown measurement mode {mode!r}")


class RunFailure(RuntimeError):
    """A step failed; `.record` holds everything completed before the failure."""

    def __init__(self, message: str, record: "RunRecord"):
        super().__init__(message)
        self.record = record


@dataclass
class StepRecord:
    step: int
    t: float
    true_x: np.ndarray
    estimates: list[np.ndarray]
    plan: np.ndarray
    action: np.ndarray
    mean_estimation_error: float
    est_consensus: float
    est_violation: float
    ctl_consensus: float
    ctl_violation: float
    est_seconds: float
    ctl_seconds: float
    roller_rates: np.ndarray | None = None
    perimeter_error: float | None = None
    max_q_residual: float | None = None
    est_curve: np.ndarray | None = None
    ctl_curve: np.ndarray | None = None


@dataclass
class RunRecord:
    scenario_name: str
    seed: int
    dt: float
    steps: list[StepRecord] = field(default_factory=list)
    failure: str | None = None

    @property
    def final_x(self) -> np.ndarray:
        return self.steps[-1].true_x

    def trajectory_of(self, index: int, dim: int) -> np.ndarray:
        """Per-step positions of one vertex/point: (steps, dim)."""
        return np.array([s.true_x.reshape(-1, dim)[index] for s in self.steps])

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario_name,
            "seed": self.seed,
            "dt": self.dt,
            "failure": self.failure,
            "steps": [
                {
                    "step": s.step,
                    "t": s.t,
                    "true_x": s.true_x.tolist(),
                    "estimates": [e.tolist() for e in s.estimates],
                    "plan": s.plan.tolist(),
                    "action": s.action.tolist(),
                    "mean_estimation_error": s.mean_estimation_error,
                    "est_consensus": s.est_consensus,
                    "est_violation": s.est_violation,
                    "ctl_consensus": s.ctl_consensus,
                    "ctl_violation": s.ctl_violation,
                    "est_seconds": s.est_seconds,
                    "ctl_seconds": s.ctl_seconds,
                    "roller_rates": None if s.roller_rates is None else s.roller_rates.tolist(),
                    "perimeter_error": s.perimeter_error,
                    "max_q_residual": s.max_q_residual,
                    "est_curve": None if s.est_curve is None else s.est_curve.tolist(),
                    "ctl_curve": None if s.ctl_curve is None else s.ctl_curve.tolist(),
                }
                for s in self.steps
            ],
        }


def _mean_point_error(estimate: np.ndarray, truth: np.ndarray, dim: int) -> float:
    diff = (estimate - truth).reshape(-1, dim)
    return float(np.mean(np.linalg.norm(diff, axis=1)))


def build_estimation_problem(scenario: Scenario, measurements):
    if scenario.measurement_mode == "relative-position":
        return build_position_problem(
            scenario.graph, measurements, scenario.anchors, scenario.estimation_options
        )
    if scenario.measurement_mode == "relative-distance":
        return build_distance_problem(
            scenario.graph,
            measurements,
            scenario.anchors,
            scenario.estimation_options,
            inner=scenario.inner,
        )
    return build_isoperimetric_estimation_problem(
        scenario.tube,
        measurements,
        scenario.anchors,
        scenario.estimation_options,
        inner=scenario.inner,
    )


def step_constraints(
    scenario: Scenario,
    commands,
    monitor: EdgeLimitMonitor | None,
    true_x,
):
    """Static assignments plus injected commands and any active edge limits.

    `commands` is a list of (target, velocity) pairs; each lands as a
    velocity constraint at the node owning the target point, and nowhere
    else.
    """
    n = scenario.num_nodes
    per_node: list[list] = [list(scenario.constraint_map.get(i, [])) for i in range(n)]
    for target, v in commands:
        holder = scenario.tube.point_owner[target] if scenario.tube is not None else target
        per_node[holder] = per_node[holder] + [NodeVelocity(target, np.asarray(v, dtype=float))]
    if monitor is not None:
        for limit in monitor.update(true_x):
            i, j = scenario.graph.edges[limit.edge]
            per_node[i] = per_node[i] + [limit]
            per_node[j] = per_node[j] + [limit]
    return per_node


def mechanical_rows(scenario: Scenario, per_node_constraints, true_x):
    """Constraint rows the hardware enforces by construction, at the true state.

    Commands are excluded: nothing physically prevents command error, but
    ground contact, edge limits and the tube kinematics are exact.
    """
    g = scenario.graph
    rows = []
    rhs = []
    for cs in per_node_constraints:
        for c in cs:
            if isinstance(c, (FeetPinned, AxisRatePins, EdgeLimitActive)):
                A, b = lower_constraint(g, true_x, c)
                rows.append(A)
                rhs.append(b)
    if scenario.tube is not None:
        robot = scenario.tube
        rows.append(robot.q_jacobian(true_x))
        rhs.append(np.zeros(4 * len(robot.modules)))
        rows.append(robot.perimeter_row(true_x)[None, :])
        rhs.append(np.zeros(1))
    if not rows:
        return None
    return np.vstack(rows), np.concatenate(rhs)


def project_plan(plan: np.ndarray, rows) -> np.ndarray:
    if rows is None:
        return plan
    A, b = rows
    correction, *_ = np.linalg.lstsq(A, A @ plan - b, rcond=None)
    return plan - correction


def commanded_edge_rates(scenario: Scenario, estimates, plans) -> np.ndarray:
    """Per-actuator rate commands, each computed from its owner's own copy.

    Actuator k (an edge) is commanded by its lower-numbered endpoint using
    that node's estimate and plan; all copies agree to consensus tolerance.
    For tube robots the actuators are rollers, so the commands are roller
    speeds mapped back to tube-segment rates.
    """
    if scenario.tube is None:
        g = scenario.graph
        rates = np.zeros(g.num_edges)
        rows_cache: dict[int, np.ndarray] = {}
        for k, (i, j) in enumerate(g.edges):
            owner = min(i, j)
            if owner not in rows_cache:
                rows_cache[owner] = rigidity_matrix(g, estimates[owner])
            rates[k] = rows_cache[owner][k] @ plans[owner]
    else:
        robot = scenario.tube
        rates = np.zeros(len(robot.modules))
        for idx, m in enumerate(robot.modules):
            rates[idx] = robot.roller_rates(estimates[m.vertex], plans[m.vertex])[idx]
    if scenario.max_edge_rate is not None:
        rates = np.clip(rates, -scenario.max_edge_rate, scenario.max_edge_rate)
    return rates


def kinematic_response(
    scenario: Scenario, true_x, action, mech, damping: float = 0.02
) -> np.ndarray:
    """True node velocities produced by the actuator commands.

    Mechanically enforced rows (ground contact, module kinematics) are
    satisfied exactly; the actuator rate targets are met in a damped least
    squares sense on the remaining motions.  The damping stands in for
    actuator compliance: commands that are inconsistent with the true
    geometry (the signature of estimation error) distort the motion instead
    of producing unbounded velocities.
    """
    if scenario.tube is None:
        R = rigidity_matrix(scenario.graph, true_x)
        target = np.asarray(action, dtype=float)
    else:
        robot = scenario.tube
        B, _ = robot.incidence()
        n_seg = len(robot.segment_edge_indices)
        R = rigidity_matrix(robot.graph, true_x)[:n_seg]
        target = B @ np.asarray(action, dtype=float)
    if mech is None:
        Z = np.eye(true_x.size)
    else:
        from .oracle import nullspace

        Z = nullspace(mech[0], true_x.size)
        if Z.shape[1] == 0:
            return np.zeros(true_x.size)
    RZ = R @ Z
    stacked = np.vstack([RZ, damping * np.eye(Z.shape[1])])
    rhs = np.concatenate([target, np.zeros(Z.shape[1])])
    y, *_ = np.linalg.lstsq(stacked, rhs, rcond=None)
    return Z @ y


class SimulationLoop:
    """Reusable stepper for the measure/estimate/coordinate/act loop.

    Estimation is warm-started from each node's previous estimate and the
    control solve from its previous plan; multipliers restart at zero each
    solve.  The scripted runner and the interactive teleoperation service
    both drive this stepper.
    """

    def __init__(self, scenario: Scenario, *, record_curves: bool = False):
        self.scenario = scenario
        self.record_curves = record_curves
        self.rng = np.random.default_rng(scenario.seed)
        self.true_x = scenario.true_initial.copy()
        n = scenario.num_nodes
        self.est_warm = np.tile(scenario.nominal, (n, 1))
        self.plan_warm = np.zeros((n, self.true_x.size))
        self.monitor = (
            EdgeLimitMonitor(scenario.graph, *scenario.edge_limits)
            if scenario.edge_limits is not None
            else None
        )
        self.record = RunRecord(
            scenario_name=scenario.name, seed=scenario.seed, dt=scenario.dt
        )
        self.k = 0

    def step(self, commands) -> StepRecord:
        """Advance one control period with `commands` = [(target, velocity)]."""
        scenario = self.scenario
        dim = scenario.graph.dim
        n = scenario.num_nodes
        t = self.k * scenario.dt
        x_measured = self.true_x.copy()

        measurements = synthesize_measurements(scenario, self.true_x, self.rng)
        t0 = time.perf_counter()
        est_problem = build_estimation_problem(scenario, measurements)
        estimates, est_diag = run_rounds(est_problem, self.est_warm, record_cost=False)
        t1 = time.perf_counter()

        per_node_cs = step_constraints(scenario, commands, self.monitor, self.true_x)
        if scenario.tube is None:
            ctl_problem = build_control_problem(
                scenario.graph, estimates, scenario.objective, per_node_cs,
                scenario.control_options,
            )
        else:
            # modules linearize at node 1's copy; all copies agree to
            # consensus tolerance by the end of the estimation rounds
            ctl_problem = build_isoperimetric_control_problem(
                scenario.tube, estimates[0], scenario.objective, per_node_cs,
                scenario.control_options,
            )
        plans, ctl_diag = run_rounds(ctl_problem, self.plan_warm, record_cost=False)
        t2 = time.perf_counter()

        assembled = np.zeros(self.true_x.size)
        for i in range(n):
            idx = (
                scenario.tube.owned_indices(i)
                if scenario.tube is not None
                else np.arange(i * dim, (i + 1) * dim)
            )
            assembled[idx] = plans[i][idx]
        mech = mechanical_rows(scenario, per_node_cs, self.true_x)
        if scenario.project_plan:
            assembled = project_plan(assembled, mech)

        command_rates = commanded_edge_rates(scenario, estimates, plans)
        if scenario.tube is not None:
            rdot = command_rates
            B, _ = scenario.tube.incidence()
            action = B @ rdot
        else:
            rdot = None
            action = command_rates

        xdot_true = kinematic_response(
            scenario, self.true_x, command_rates, mech, damping=scenario.response_damping
        )
        self.true_x = self.true_x + scenario.dt * xdot_true
        perimeter_error = None
        max_q = None
        if scenario.tube is not None:
            self.true_x = scenario.tube.repair_constraints(self.true_x)
            perimeter_error = abs(
                scenario.tube.perimeter_length(self.true_x) - scenario.tube.layout.total_length
            )
            max_q = float(np.max(np.abs(scenario.tube.q_residuals(self.true_x))))

        step = StepRecord(
            step=self.k,
            t=t,
            true_x=self.true_x.copy(),
            estimates=[e.copy() for e in estimates],
            plan=assembled.copy(),
            action=action,
            mean_estimation_error=_mean_point_error(estimates[0], x_measured, dim),
            est_consensus=float(est_diag.consensus_residual[-1])
            if est_diag.consensus_residual.size
            else 0.0,
            est_violation=float(np.max(est_diag.constraint_violation[-1]))
            if est_diag.constraint_violation.size
            else 0.0,
            ctl_consensus=float(ctl_diag.consensus_residual[-1])
            if ctl_diag.consensus_residual.size
            else 0.0,
            ctl_violation=float(np.max(ctl_diag.constraint_violation[-1]))
            if ctl_diag.constraint_violation.size
            else 0.0,
            est_seconds=t1 - t0,
            ctl_seconds=t2 - t1,
            roller_rates=rdot,
            perimeter_error=perimeter_error,
            max_q_residual=max_q,
            est_curve=est_diag.consensus_residual if self.record_curves else None,
            ctl_curve=ctl_diag.consensus_residual if self.record_curves else None,
        )
        self.record.steps.append(step)
        self.est_warm = np.stack(estimates)
        self.plan_warm = np.stack(plans)
        self.k += 1
        return step

    def latest_plans(self) -> np.ndarray:
        return self.plan_warm


def run_algorithm1(scenario: Scenario, *, record_curves: bool = False) -> RunRecord:
    """Run the full loop over the scenario's command script.

    On failure a RunFailure carries everything completed before the error.
    """
    loop = SimulationLoop(scenario, record_curves=record_curves)
    for k in range(scenario.steps):
        t = k * scenario.dt
        commands = [(c.target, c.v) for c in scenario.active_commands(t)]
        try:
            loop.step(commands)
        except Exception as exc:
            loop.record.failure = f"{type(exc).__name__}: {exc}"
            raise RunFailure(f"step {k} failed: {exc}", loop.record) from exc
    return loop.record
