"""Preregistered scenarios reproducing the shipped experiment suites."""

from __future__ import annotations

import numpy as np

from .admm import AdmmOptions, InnerSolverConfig, LocalConstraint
from .control import AxisRatePins, FeetPinned, MinEdgeRate, NominalTracking
from .core import edge_lengths
from .estimation import AxisPins
from .robots import (
    perturbed_octahedron,
    planar_six_node,
    regular_octahedron,
    support_feet_pins,
    triangle_tube,
)
from .scenario import Scenario, TimedCommand

POSITION_OPTIONS = AdmmOptions(alpha_p=1.0, alpha_r=4.0, iterations=200)
DISTANCE_OPTIONS = AdmmOptions(alpha_p=0.1, alpha_r=1.0, iterations=200)
CONTROL_OPTIONS = AdmmOptions(alpha_p=0.25, alpha_r=1.0, iterations=200)
TUBE_OPTIONS = AdmmOptions(alpha_p=0.25, alpha_r=1.0, iterations=100)
TUBE_INNER = InnerSolverConfig(grad_tol=1e-5, max_iterations=100)


def octahedron_scenario(
    mode: str = "relative-position",
    noise_std: float = 0.0,
    seed: int = 0,
    truth_seed: int = 0,
) -> Scenario:
    """Shape estimation on the length-perturbed octahedron.

    The truth realizes per-edge length targets drawn from `truth_seed`; the
    nominal (regular) shape is the first estimation guess.  Anchors pin the
    three support feet following the standard recipe.
    """
    _, nominal = regular_octahedron()
    g, truth = perturbed_octahedron(seed=truth_seed)
    options = POSITION_OPTIONS if mode == "relative-position" else DISTANCE_OPTIONS
    return Scenario(
        name=f"octahedron-{mode}",
        graph=g,
        true_initial=truth,
        nominal=nominal,
        measurement_mode=mode,
        noise_std=noise_std,
        anchors=support_feet_pins(truth),
        objective=MinEdgeRate(),
        constraint_map={},
        commands=[],
        estimation_options=options,
        control_options=CONTROL_OPTIONS,
        inner=InnerSolverConfig(),
        dt=0.1,
        steps=1,
        seed=seed,
        project_plan=False,
    )


def six_node_control_scenario(
    noise_std: float = 0.0,
    seed: int = 0,
    dt: float = 0.1,
    out_and_back: bool = True,
) -> Scenario:
    """The planar 9-actuator robot moving its apex 1 m/s out and back.

    Feet: bottom-left node fully pinned, bottom-center node pinned
    vertically.  The command is open-loop and held only at the apex node.
    """
    g, x0 = planar_six_node()
    commands = [TimedCommand(0.0, 2.0, 5, np.array([1.0, 0.0]))]
    if out_and_back:
        commands.append(TimedCommand(2.0, 4.0, 5, np.array([-1.0, 0.0])))
    steps = int(round((4.0 if out_and_back else 2.0) / dt))
    return Scenario(
        name="six-node-apex-task",
        graph=g,
        true_initial=x0,
        nominal=x0.copy(),
        measurement_mode="relative-position",
        noise_std=noise_std,
        anchors=AxisPins(
            (
                # estimation gauge: bottom-left at its position, bottom-center height
                *support_feet_pins_2d(x0),
            )
        ),
        objective=NominalTracking(edge_lengths(g, x0)),
        constraint_map={
            0: [FeetPinned((0,))],
            1: [AxisRatePins(((1, 1),))],
        },
        commands=commands,
        estimation_options=POSITION_OPTIONS,
        control_options=CONTROL_OPTIONS,
        inner=InnerSolverConfig(),
        dt=dt,
        steps=steps,
        seed=seed,
        project_plan=True,
        max_edge_rate=2.0,
    )


def support_feet_pins_2d(x0: np.ndarray):
    """2D estimation gauge: bottom-left node (x, y) and bottom-center y."""
    from .estimation import AxisPin

    p = x0.reshape(-1, 2)
    return (
        AxisPin(0, 0, float(p[0, 0])),
        AxisPin(0, 1, float(p[0, 1])),
        AxisPin(1, 1, float(p[1, 1])),
    )


def triangle_teleop_scenario(
    seed: int = 0,
    dt: float = 0.05,
    steps: int = 100,
    noise_std: float = 0.0,
    commands: list[TimedCommand] | None = None,
    targets: list[dict] | None = None,
) -> Scenario:
    """Tube triangle with encoder sensing; the top point takes velocity commands.

    The passive vertex is pinned to the ground, the first module may only
    slide horizontally.  Command script and target regions default to the
    scripted left-then-right demonstration.
    """
    robot, x_exp = triangle_tube()
    pts = x_exp.reshape(-1, 2)
    p1 = robot.point_of[(0, "P")]
    a2 = robot.point_of[(1, "A")]
    a3 = robot.point_of[(2, "A")]
    d = 2

    def pin_block(pairs):
        A = np.zeros((len(pairs), robot.dimension))
        b = np.zeros(len(pairs))
        for t, (pt, axis) in enumerate(pairs):
            A[t, pt * d + axis] = 1.0
            b[t] = pts[pt, axis]
        return LocalConstraint(A, b)

    anchors = {
        0: pin_block([(p1, 0), (p1, 1)]),
        1: pin_block([(a2, 1)]),
    }
    if commands is None:
        commands = [
            TimedCommand(0.0, 2.0, a3, np.array([-0.15, 0.0])),
            TimedCommand(2.0, 5.0, a3, np.array([0.15, 0.0])),
        ]
    if targets is None:
        # where the scripted command profile parks the top point
        x0, y0 = float(pts[a3, 0]), float(pts[a3, 1])
        targets = [
            {"label": "left", "center": [x0 - 0.30, y0], "radius": 0.1},
            {"label": "right", "center": [x0 + 0.15, y0], "radius": 0.1},
        ]
    return Scenario(
        name="triangle-teleop",
        graph=robot.graph,
        true_initial=x_exp,
        nominal=x_exp.copy(),
        measurement_mode="encoder",
        noise_std=noise_std,
        anchors=anchors,
        objective=MinEdgeRate(),
        constraint_map={
            0: [FeetPinned((p1,))],
            1: [AxisRatePins(((a2, 1),))],
        },
        commands=commands,
        estimation_options=TUBE_OPTIONS,
        control_options=TUBE_OPTIONS,
        inner=TUBE_INNER,
        dt=dt,
        steps=steps,
        seed=seed,
        project_plan=True,
        tube=robot,
        targets=list(targets),
    )
