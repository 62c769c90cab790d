"""Stock robot geometries used by the shipped scenarios and experiment suites."""

from __future__ import annotations

import numpy as np

from .core import FrameworkGraph, edge_lengths, rigidity_matrix, stack_positions
from .estimation import AxisPin, AxisPins
from .isoperimetric import ExpandedTubeRobot, RollerModuleGeometry, TubeLayout


def regular_octahedron() -> tuple[FrameworkGraph, np.ndarray]:
    """Unit-edge octahedron: 6 vertices, 12 edges, vertices on the axes."""
    a = 1.0 / np.sqrt(2.0)
    p = np.array(
        [
            [a, 0.0, 0.0],
            [0.0, a, 0.0],
            [0.0, 0.0, a],
            [-a, 0.0, 0.0],
            [0.0, -a, 0.0],
            [0.0, 0.0, -a],
        ]
    )
    opposite = {(0, 3), (1, 4), (2, 5)}
    edges = [
        (i, j)
        for i in range(6)
        for j in range(i + 1, 6)
        if (i, j) not in opposite
    ]
    g = FrameworkGraph(6, tuple(edges), 3)
    return g, stack_positions(p)


# Mutually adjacent vertices used as the support feet of the octahedron in
# every shipped scenario; anchor rows pin z of all three plus x,y of the
# first and y of the second.
OCTAHEDRON_FEET = (0, 1, 2)


def support_feet_pins(x: np.ndarray, feet=OCTAHEDRON_FEET, dim: int = 3) -> AxisPins:
    """Anchor recipe for distance-only 3D problems: 6 rows from 3 feet.

    Pins the height of every foot, both ground coordinates of the first and
    one of the second, at their values in `x`.
    """
    p = np.asarray(x, dtype=float).reshape(-1, dim)
    f0, f1, f2 = feet
    pins = (
        AxisPin(f0, 2, float(p[f0, 2])),
        AxisPin(f1, 2, float(p[f1, 2])),
        AxisPin(f2, 2, float(p[f2, 2])),
        AxisPin(f0, 0, float(p[f0, 0])),
        AxisPin(f0, 1, float(p[f0, 1])),
        AxisPin(f1, 1, float(p[f1, 1])),
    )
    return AxisPins(pins)


def realize_lengths(
    g: FrameworkGraph, x0: np.ndarray, targets: np.ndarray, steps: int = 50
) -> np.ndarray:
    """Gauss-Newton fit of a configuration to target edge lengths.

    The minimum-norm step leaves the rigid-motion components of x0 untouched,
    so the result stays in x0's frame.
    """
    x = np.array(x0, dtype=float)
    targets = np.asarray(targets, dtype=float)
    for _ in range(steps):
        res = edge_lengths(g, x) - targets
        if np.max(np.abs(res)) < 1e-14:
            break
        step, *_ = np.linalg.lstsq(rigidity_matrix(g, x), res, rcond=None)
        x -= step
    return x


def perturbed_octahedron(seed: int, sigma: float = 0.25) -> tuple[FrameworkGraph, np.ndarray]:
    """Octahedron with edge lengths perturbed away from 1 m and re-embedded.

    Per-edge targets are 1 + N(0, sigma^2) draws (clipped away from
    degeneracy); the configuration realizing them is found by Gauss-Newton
    from the regular shape.  Fully determined by the seed.
    """
    g, x0 = regular_octahedron()
    rng = np.random.default_rng(seed)
    targets = np.clip(1.0 + sigma * rng.standard_normal(g.num_edges), 0.4, 1.8)
    return g, realize_lengths(g, x0, targets)


def planar_six_node() -> tuple[FrameworkGraph, np.ndarray]:
    """Minimally rigid 2D truss: 9 actuators, 6 nodes, apex on top.

    Vertices: 3 along the ground, 2 at mid height, the commanded node 6 at
    the apex.  Node 1 is the bottom-left foot, node 2 the bottom-center one.
    """
    h = np.sqrt(3.0) / 2.0
    p = np.array(
        [
            [0.0, 0.0],
            [1.0, 0.0],
            [2.0, 0.0],
            [0.5, h],
            [1.5, h],
            [1.0, 2.0 * h],
        ]
    )
    edges = ((0, 1), (1, 2), (0, 3), (1, 3), (1, 4), (2, 4), (3, 4), (3, 5), (4, 5))
    g = FrameworkGraph(6, edges, 2)
    return g, stack_positions(p)


def triangle_tube(
    side: float = 2.0, arm: float = 0.25, pinch: float = 0.2
) -> tuple[ExpandedTubeRobot, np.ndarray]:
    """Single-triangle tube robot: passive vertex 1, motorized vertices 2 and 3.

    Returns the expanded robot and its reference expanded configuration; the
    layout's total length is the one implied by that configuration.
    """
    g = FrameworkGraph(3, ((0, 1), (1, 2), (2, 0)), 2)
    x_simple = stack_positions(
        np.array([[0.0, 0.0], [side, 0.0], [side / 2.0, side * np.sqrt(3.0) / 2.0]])
    )
    modules = (
        RollerModuleGeometry(vertex=1, arm_length=arm, pinch_separation=pinch),
        RollerModuleGeometry(vertex=2, arm_length=arm, pinch_separation=pinch),
    )
    provisional = TubeLayout(g, (0, 1, 2, 0), total_length=100.0)
    probe = ExpandedTubeRobot(provisional, modules)
    x_exp = probe.expand_configuration(x_simple)
    total = probe.perimeter_length(x_exp)
    layout = TubeLayout(g, (0, 1, 2, 0), total_length=total)
    return ExpandedTubeRobot(layout, modules), x_exp
