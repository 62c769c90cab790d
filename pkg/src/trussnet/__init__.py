"""Distributed coordination engine for truss robots.

Library + simulator + teleoperation service: every node of a truss robot
runs consensus rounds to reconstruct the robot's shape from local
measurements and to agree on node velocities under locally held linear
constraints, including the constant-perimeter constraints of tube robots.
"""

from .admm import (
    AdmmOptions,
    ConsensusProblem,
    GeneralCost,
    InnerSolverConfig,
    LocalConstraint,
    NodeState,
    QuadraticCost,
    RoundDiagnostics,
    run_rounds,
)
from .core import (
    Configuration,
    FrameworkGraph,
    edge_lengths,
    edge_rate_map,
    is_infinitesimally_rigid,
    rigidity_matrix,
)
from .oracle import centralized_solve

__all__ = [
    "AdmmOptions",
    "ConsensusProblem",
    "Configuration",
    "FrameworkGraph",
    "GeneralCost",
    "InnerSolverConfig",
    "LocalConstraint",
    "NodeState",
    "QuadraticCost",
    "RoundDiagnostics",
    "centralized_solve",
    "edge_lengths",
    "edge_rate_map",
    "is_infinitesimally_rigid",
    "rigidity_matrix",
    "run_rounds",
]

__version__ = "0.1.0"
