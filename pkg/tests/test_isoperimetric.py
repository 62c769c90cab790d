import numpy as np
import pytest

from trussnet.admm import AdmmOptions, InnerSolverConfig, LocalConstraint, run_rounds
from trussnet.control import AxisRatePins, FeetPinned, MinEdgeRate, NodeVelocity
from trussnet.core import FrameworkGraph, rigid_motion_basis, stack_positions
from trussnet.isoperimetric import (
    ExpandedTubeRobot,
    InfeasibleConstraintStackError,
    KinematicViolationError,
    RollerModuleGeometry,
    TubeLayout,
    UndefinedAngleError,
    bisection_residual,
    build_isoperimetric_control_problem,
    build_isoperimetric_estimation_problem,
    constraint_jacobian_Q,
    lengths_from_rollers,
    perimeter_constraint_row,
    roller_rates,
)
from trussnet.oracle import centralized_solve
from trussnet.robots import triangle_tube

ISO_OPTIONS = AdmmOptions(alpha_p=0.25, alpha_r=1.0, iterations=200)


def triangle_layout(total=6.0):
    g = FrameworkGraph(3, ((0, 1), (1, 2), (2, 0)), 2)
    return g, TubeLayout(g, (0, 1, 2, 0), total_length=total)


def equilateral_config(side=2.0):
    return stack_positions(
        np.array([[0.0, 0.0], [side, 0.0], [side / 2.0, side * np.sqrt(3.0) / 2.0]])
    )


def point_pin_rows(robot, pairs):
    N = robot.dimension
    d = robot.simple.dim
    A = np.zeros((len(pairs), N))
    b = np.zeros(len(pairs))
    for t, (pt, axis, value) in enumerate(pairs):
        A[t, pt * d + axis] = 1.0
        b[t] = value
    return LocalConstraint(A, b)


def triangle_anchor_blocks(robot, x_exp):
    """Pin the passive point fully plus one module-top height."""
    pts = x_exp.reshape(-1, 2)
    p1 = robot.point_of[(0, "P")]
    a2 = robot.point_of[(1, "A")]
    return {
        0: point_pin_rows(robot, [(p1, 0, pts[p1, 0]), (p1, 1, pts[p1, 1])]),
        1: point_pin_rows(robot, [(a2, 1, pts[a2, 1])]),
    }


class TestTubeLayout:
    def test_walk_must_close(self):
        g, _ = triangle_layout()
        with pytest.raises(ValueError, match="closed"):
            TubeLayout(g, (0, 1, 2), total_length=6.0)

    def test_walk_must_cover_every_edge(self):
        g = FrameworkGraph(3, ((0, 1), (1, 2), (2, 0)), 2)
        with pytest.raises(ValueError, match="cover"):
            TubeLayout(g, (0, 1, 0), total_length=6.0)

    def test_walk_through_non_edge_rejected(self):
        g = FrameworkGraph(4, ((0, 1), (1, 2), (2, 0), (2, 3)), 2)
        with pytest.raises(KeyError):
            TubeLayout(g, (0, 1, 3, 0), total_length=6.0)

    def test_incidence_columns_sum_to_zero(self):
        _, layout = triangle_layout()
        B, c = layout.incidence()
        assert np.max(np.abs(B.sum(axis=0))) == 0.0

    def test_equilateral_split(self):
        _, layout = triangle_layout(total=6.0)
        assert lengths_from_rollers(layout, np.array([2.0, 4.0])) == pytest.approx(
            [2.0, 2.0, 2.0]
        )

    def test_total_length_conserved_exactly_for_random_rollers(self):
        _, layout = triangle_layout(total=6.0)
        rng = np.random.default_rng(0)
        for _ in range(100):
            r = np.sort(rng.uniform(0.0, 6.0, size=2))
            L = lengths_from_rollers(layout, r)
            assert float(np.sum(L)) == pytest.approx(6.0, abs=1e-12)

    def test_matches_walk_coordinate_oracle(self):
        _, layout = triangle_layout(total=6.0)
        r = np.array([2.0, 4.0])
        # direct recomputation: edge length = downstream boundary - upstream
        coords = [0.0, r[0], r[1], 6.0]
        expected = np.diff(coords)
        assert lengths_from_rollers(layout, r) == pytest.approx(expected)

    def test_rollers_passing_each_other_rejected(self):
        _, layout = triangle_layout()
        with pytest.raises(KinematicViolationError):
            lengths_from_rollers(layout, np.array([4.0, 2.0]))
        with pytest.raises(KinematicViolationError):
            lengths_from_rollers(layout, np.array([-0.5, 2.0]))


class TestRollerRates:
    def test_rigid_translation_moves_no_roller(self):
        g, layout = triangle_layout()
        x = equilateral_config()
        xdot = np.tile([0.4, -0.1], 3)
        assert np.max(np.abs(roller_rates(layout, g, x, xdot))) < 1e-12

    def test_concrete_feasible_rate(self):
        # edge rates (+d, -d, 0) require the first roller to carry all motion
        g, layout = triangle_layout(total=6.0)
        x = equilateral_config()
        from trussnet.core import rigidity_matrix

        delta = 0.3
        ldot_target = np.array([delta, -delta, 0.0])
        xdot, *_ = np.linalg.lstsq(rigidity_matrix(g, x), ldot_target, rcond=None)
        rdot = roller_rates(layout, g, x, xdot)
        assert rdot == pytest.approx([delta, 0.0], abs=1e-10)

    def test_reconstructs_edge_rates_for_feasible_plans(self):
        g, layout = triangle_layout()
        x = equilateral_config()
        from trussnet.core import edge_rate_map, rigidity_matrix

        rng = np.random.default_rng(1)
        B, _ = layout.incidence()
        for _ in range(10):
            ldot_target = rng.standard_normal(3)
            ldot_target -= ldot_target.mean()  # perimeter-feasible
            xdot, *_ = np.linalg.lstsq(rigidity_matrix(g, x), ldot_target, rcond=None)
            ldot = edge_rate_map(g, x, xdot)
            rdot = roller_rates(layout, g, x, xdot)
            assert np.max(np.abs(B @ rdot - ldot)) < 1e-10


class TestPerimeterRow:
    def test_rigid_motions_in_null_space(self):
        g, _ = triangle_layout()
        x = equilateral_config()
        row, rhs = perimeter_constraint_row(g, x)
        basis = rigid_motion_basis(g, x)
        assert np.max(np.abs(row @ basis)) < 1e-12
        assert rhs == 0.0

    def test_uniform_scaling_violates(self):
        g, _ = triangle_layout()
        x = equilateral_config()
        p = x.reshape(3, 2)
        xdot = (p - p.mean(axis=0)).reshape(-1)
        row, _ = perimeter_constraint_row(g, x)
        assert row @ xdot > 1.0  # grows every edge


class TestBisectionResidual:
    def test_mirror_symmetric_trapezoid(self):
        r = bisection_residual(
            [-0.5, 0.0], [0.5, 0.0], [-1.5, 1.0], [1.5, 1.0]
        )
        assert r == pytest.approx(0.0, abs=1e-14)

    def test_straight_tube(self):
        r = bisection_residual([0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [2.0, 0.0])
        assert r == pytest.approx(0.0, abs=1e-14)

    def test_matches_trigonometric_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            b, c, dd, e = rng.standard_normal((4, 2))

            def angle(u, v):
                cosv = u @ v / (np.linalg.norm(u) * np.linalg.norm(v))
                return np.arccos(np.clip(cosv, -1.0, 1.0))

            expected = np.cos(angle(dd - b, c - b)) - np.cos(angle(e - c, b - c))
            assert bisection_residual(b, c, dd, e) == pytest.approx(expected, abs=1e-12)

    def test_coincident_points_rejected(self):
        with pytest.raises(UndefinedAngleError):
            bisection_residual([0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [2.0, 0.0])


class TestExpandedRobot:
    def test_constructed_truth_satisfies_all_module_constraints(self):
        robot, x_exp = triangle_tube()
        assert np.max(np.abs(robot.q_residuals(x_exp))) < 1e-12

    def test_jacobian_row_count(self):
        robot, x_exp = triangle_tube()
        J = constraint_jacobian_Q(robot, x_exp)
        assert J.shape == (4 * len(robot.modules), robot.dimension)

    def test_rigid_motions_in_jacobian_null_space(self):
        robot, x_exp = triangle_tube()
        basis = rigid_motion_basis(robot.graph, x_exp)
        assert np.max(np.abs(constraint_jacobian_Q(robot, x_exp) @ basis)) < 1e-12
        assert np.max(np.abs(robot.perimeter_row(x_exp) @ basis)) < 1e-12

    def test_jacobian_matches_finite_differences(self):
        robot, x_exp = triangle_tube()
        rng = np.random.default_rng(3)
        h = 1e-7
        for _ in range(20):
            x = x_exp + 0.02 * rng.standard_normal(robot.dimension)
            J = constraint_jacobian_Q(robot, x)
            direction = rng.standard_normal(robot.dimension)
            direction /= np.linalg.norm(direction)
            fd = (robot.q_residuals(x + h * direction) - robot.q_residuals(x - h * direction)) / (
                2 * h
            )
            assert np.max(np.abs(fd - J @ direction)) < 1e-5

    def test_residuals_invariant_under_rigid_motion(self):
        robot, x_exp = triangle_tube()
        rng = np.random.default_rng(4)
        theta = rng.uniform(0, 2 * np.pi)
        Q = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        t = rng.standard_normal(2)
        moved = (x_exp.reshape(-1, 2) @ Q.T + t).reshape(-1)
        assert robot.q_residuals(moved) == pytest.approx(robot.q_residuals(x_exp), abs=1e-12)
        assert robot.perimeter_length(moved) == pytest.approx(
            robot.perimeter_length(x_exp), abs=1e-12
        )

    def test_encoder_round_trip(self):
        robot, x_exp = triangle_tube()
        r = robot.encoder_readings(x_exp)
        segs = robot.segment_lengths_from_encoders(r)
        assert segs == pytest.approx(robot.segment_lengths(x_exp), abs=1e-12)

    def test_expanded_incidence_conserves_total_length(self):
        robot, x_exp = triangle_tube()
        B, c = robot.incidence()
        assert np.max(np.abs(B.sum(axis=0))) == 0.0
        r = robot.encoder_readings(x_exp)
        total = float(np.sum(B @ r + c)) + robot.internal_length
        assert total == pytest.approx(robot.layout.total_length, abs=1e-12)

    def test_repair_pulls_back_drifted_configuration(self):
        robot, x_exp = triangle_tube()
        rng = np.random.default_rng(5)
        drifted = x_exp + 2e-3 * rng.standard_normal(robot.dimension)
        fixed = robot.repair_constraints(drifted, trigger=1e-8, max_steps=5)
        assert np.max(np.abs(robot.q_residuals(fixed))) < 1e-8
        assert abs(robot.perimeter_length(fixed) - robot.layout.total_length) < 1e-8

    def test_modules_must_cover_rollers(self):
        g, layout = triangle_layout()
        with pytest.raises(ValueError, match="cover"):
            ExpandedTubeRobot(layout, (RollerModuleGeometry(1, 0.25, 0.2),))


class TestIsoEstimation:
    def test_truth_is_stationary_with_exact_encoders(self):
        robot, x_exp = triangle_tube()
        anchors = triangle_anchor_blocks(robot, x_exp)
        r = robot.encoder_readings(x_exp)
        prob = build_isoperimetric_estimation_problem(robot, r, anchors, ISO_OPTIONS)
        assert prob.total_cost(x_exp) < 1e-20
        for cost in prob.costs:
            assert np.max(np.abs(cost.gradient(x_exp))) < 1e-10

    def test_gradient_matches_finite_differences(self):
        robot, x_exp = triangle_tube()
        anchors = triangle_anchor_blocks(robot, x_exp)
        prob = build_isoperimetric_estimation_problem(
            robot, robot.encoder_readings(x_exp), anchors, ISO_OPTIONS
        )
        rng = np.random.default_rng(6)
        h = 1e-6
        for _ in range(10):
            x = x_exp + 0.02 * rng.standard_normal(robot.dimension)
            cost = prob.costs[int(rng.integers(3))]
            grad = cost.gradient(x)
            direction = rng.standard_normal(robot.dimension)
            direction /= np.linalg.norm(direction)
            fd = (cost.value(x + h * direction) - cost.value(x - h * direction)) / (2 * h)
            assert abs(fd - grad @ direction) / max(1.0, abs(fd)) < 1e-5

    def test_equilateral_reconstruction_from_near_truth_guess(self):
        robot, x_exp = triangle_tube()
        anchors = triangle_anchor_blocks(robot, x_exp)
        prob = build_isoperimetric_estimation_problem(
            robot,
            robot.encoder_readings(x_exp),
            anchors,
            ISO_OPTIONS,
            inner=InnerSolverConfig(grad_tol=1e-6, max_iterations=200),
        )
        rng = np.random.default_rng(7)
        guess = x_exp + 0.05 * rng.standard_normal(robot.dimension)
        estimates, _ = run_rounds(prob, guess, record_cost=False)
        err = np.mean(np.linalg.norm((estimates[0] - x_exp).reshape(-1, 2), axis=1))
        assert err < 1e-2

    def test_under_anchored_rejected(self):
        from trussnet.estimation import UnderAnchoredError

        robot, x_exp = triangle_tube()
        p1 = robot.point_of[(0, "P")]
        anchors = {0: point_pin_rows(robot, [(p1, 0, 0.0), (p1, 1, 0.0)])}
        with pytest.raises(UnderAnchoredError):
            build_isoperimetric_estimation_problem(
                robot, robot.encoder_readings(x_exp), anchors, ISO_OPTIONS
            )

    def test_non_monotone_encoders_rejected(self):
        robot, x_exp = triangle_tube()
        anchors = triangle_anchor_blocks(robot, x_exp)
        with pytest.raises(KinematicViolationError):
            build_isoperimetric_estimation_problem(
                robot, np.array([4.0, 1.0]), anchors, ISO_OPTIONS
            )


def teleop_constraints(robot, x_exp, command):
    pts = x_exp.reshape(-1, 2)
    p1 = robot.point_of[(0, "P")]
    a2 = robot.point_of[(1, "A")]
    a3 = robot.point_of[(2, "A")]
    cons = [[] for _ in range(3)]
    cons[0] = [FeetPinned((p1,))]
    cons[1] = [AxisRatePins(((a2, 1),))]
    cons[2] = [NodeVelocity(a3, np.asarray(command, dtype=float))]
    return cons


class TestIsoControl:
    def test_command_perimeter_and_module_rows_satisfied(self):
        robot, x_exp = triangle_tube()
        cons = teleop_constraints(robot, x_exp, [0.1, 0.0])
        prob = build_isoperimetric_control_problem(
            robot, x_exp, MinEdgeRate(), cons, ISO_OPTIONS
        )
        a3 = robot.point_of[(2, "A")]
        xstar = centralized_solve(prob.costs, prob.constraints, prob.dimension)
        plans, diag = run_rounds(prob, np.zeros(robot.dimension), record_cost=False)
        assert xstar[2 * a3 : 2 * a3 + 2] == pytest.approx([0.1, 0.0], abs=1e-10)
        assert abs(robot.perimeter_row(x_exp) @ xstar) < 1e-10
        assert np.max(np.abs(constraint_jacobian_Q(robot, x_exp) @ xstar)) < 1e-10
        for plan in plans:
            assert np.linalg.norm(plan[2 * a3 : 2 * a3 + 2] - [0.1, 0.0]) < 1e-6
            assert abs(robot.perimeter_row(x_exp) @ plan) < 1e-6
            assert np.max(np.abs(constraint_jacobian_Q(robot, x_exp) @ plan)) < 1e-6

    def test_zero_command_everywhere_holds_still(self):
        robot, x_exp = triangle_tube()
        cons = teleop_constraints(robot, x_exp, [0.0, 0.0])
        prob = build_isoperimetric_control_problem(
            robot, x_exp, MinEdgeRate(), cons, ISO_OPTIONS
        )
        xstar = centralized_solve(prob.costs, prob.constraints, prob.dimension)
        assert np.max(np.abs(xstar)) < 1e-10

    def test_solution_converts_to_roller_rates(self):
        robot, x_exp = triangle_tube()
        cons = teleop_constraints(robot, x_exp, [0.1, 0.0])
        prob = build_isoperimetric_control_problem(
            robot, x_exp, MinEdgeRate(), cons, ISO_OPTIONS
        )
        xstar = centralized_solve(prob.costs, prob.constraints, prob.dimension)
        rdot = robot.roller_rates(x_exp, xstar)
        B, _ = robot.incidence()
        from trussnet.core import edge_rate_map

        seg_rates = edge_rate_map(robot.graph, x_exp, xstar)[:3]
        assert np.max(np.abs(B @ rdot - seg_rates)) < 1e-10

    def test_contradictory_rows_rejected(self):
        robot, x_exp = triangle_tube()
        a3 = robot.point_of[(2, "A")]
        cons = teleop_constraints(robot, x_exp, [0.1, 0.0])
        cons[0].append(FeetPinned((a3,)))  # pins the commanded point to zero
        with pytest.raises(InfeasibleConstraintStackError):
            build_isoperimetric_control_problem(robot, x_exp, MinEdgeRate(), cons, ISO_OPTIONS)
