"""Scenario files: the complete, seeded description of one simulation run.

A scenario holds the robot (plain graph or tube robot), the true initial
configuration, the measurement mode and noise level, anchors, the control
objective, per-node constraint assignments, solver hyperparameters, the
integration grid and a timed command script.  Everything random is driven
by the single seed, so a scenario replays bit-for-bit.

File format: JSON, one scenario per file.  Vertices are 1-based in files;
tube-robot anchors and constraints may reference expanded points by label
("P1", "A2", "B2", "C2", ...).  Lengths are meters, times seconds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .admm import AdmmOptions, InnerSolverConfig
from .control import (
    AxisRatePins,
    CenterOfMass,
    ControlObjective,
    FeetPinned,
    MinEdgeRate,
    NodeVelocity,
    NominalTracking,
    RawRows,
    VelocityConstraint,
)
from .core import FrameworkGraph, edge_lengths
from .estimation import AnchorSpec, AnchoredNode, AxisPin, AxisPins, CentroidAtOrigin
from .isoperimetric import ExpandedTubeRobot, RollerModuleGeometry, TubeLayout

_AXES = {"x": 0, "y": 1, "z": 2}
_AXIS_NAMES = {v: k for k, v in _AXES.items()}


@dataclass(frozen=True)
class TimedCommand:
    """A velocity command for one vertex (or expanded point), active on [start, end)."""

    start: float
    end: float
    target: int  # vertex index (graph robots) or point index (tube robots), 0-based
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float).reshape(-1))
        if self.end <= self.start:
            raise ValueError("command interval is empty")


@dataclass
class Scenario:
    name: str
    graph: FrameworkGraph
    true_initial: np.ndarray               # stacked positions (expanded for tube robots)
    nominal: np.ndarray                    # estimation guess for the first step
    measurement_mode: str                  # relative-position | relative-distance | encoder
    noise_std: float
    anchors: AnchorSpec | dict[int, Any]   # spec for graph robots, node->LocalConstraint for tube
    objective: ControlObjective
    constraint_map: dict[int, list[VelocityConstraint]]
    commands: list[TimedCommand]
    estimation_options: AdmmOptions
    control_options: AdmmOptions
    inner: InnerSolverConfig
    dt: float
    steps: int
    seed: int
    project_plan: bool = True
    tube: ExpandedTubeRobot | None = None
    targets: list[dict] = field(default_factory=list)
    edge_limits: tuple[float, float] | None = None
    max_edge_rate: float | None = None    # actuator speed limit, m/s
    response_damping: float = 0.02        # actuator compliance in the simulator

    def __post_init__(self):
        if self.measurement_mode not in ("relative-position", "relative-distance", "encoder"):
            raise ValueError(f"unknown measurement mode {self.measurement_mode!r}")
        if self.measurement_mode == "encoder" and self.tube is None:
            raise ValueError("encoder measurements require a tube robot")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        n = self.graph.n if self.tube is None else self.tube.num_points
        if self.true_initial.size != n * self.graph.dim:
            raise ValueError("true initial configuration does not conform to the robot")
        for cmd in self.commands:
            if not (0 <= cmd.target < n):
                raise ValueError(f"command references unknown vertex/point {cmd.target}")

    @property
    def num_nodes(self) -> int:
        """Computational nodes (graph vertices, also for tube robots)."""
        return self.graph.n if self.tube is None else self.tube.simple.n

    def active_commands(self, t: float) -> list[TimedCommand]:
        return [c for c in self.commands if c.start <= t < c.end]

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        robot: dict[str, Any] = {
            "dim": self.graph.dim,
        }
        if self.tube is None:
            robot["type"] = "graph"
            robot["vertices"] = self.graph.n
            robot["edges"] = [[i + 1, j + 1] for i, j in self.graph.edges]
            robot["positions"] = self.true_initial.reshape(-1, self.graph.dim).tolist()
            robot["nominal_positions"] = self.nominal.reshape(-1, self.graph.dim).tolist()
        else:
            simple = self.tube.simple
            robot["type"] = "tube"
            robot["vertices"] = simple.n
            robot["edges"] = [[i + 1, j + 1] for i, j in simple.edges]
            robot["walk"] = [v + 1 for v in self.tube.layout.walk]
            robot["total_length"] = self.tube.layout.total_length
            robot["modules"] = [
                {
                    "vertex": m.vertex + 1,
                    "arm_length": m.arm_length,
                    "pinch_separation": m.pinch_separation,
                    "tube_inside": m.tube_inside,
                }
                for m in self.tube.modules
            ]
            robot["expanded_positions"] = self.true_initial.reshape(-1, self.graph.dim).tolist()
            robot["expanded_nominal"] = self.nominal.reshape(-1, self.graph.dim).tolist()
            robot["point_labels"] = list(self.tube.point_labels)
        return {
            "name": self.name,
            "robot": robot,
            "measurement": {"mode": self.measurement_mode, "noise_std": self.noise_std},
            "anchors": _anchors_to_json(self, self.anchors),
            "objective": _objective_to_json(self.objective),
            "constraints": {
                str(node + 1): [_constraint_to_json(self, c) for c in cs]
                for node, cs in sorted(self.constraint_map.items())
                if cs
            },
            "commands": [
                {
                    "start": c.start,
                    "end": c.end,
                    "target": self._point_name(c.target),
                    "v": c.v.tolist(),
                }
                for c in self.commands
            ],
            "estimation": _options_to_json(self.estimation_options, self.inner),
            "control": _options_to_json(self.control_options, None),
            "dt": self.dt,
            "steps": self.steps,
            "seed": self.seed,
            "project_plan": self.project_plan,
            "targets": self.targets,
            "edge_limits": list(self.edge_limits) if self.edge_limits else None,
            "max_edge_rate": self.max_edge_rate,
            "response_damping": self.response_damping,
        }

    def _point_name(self, idx: int):
        if self.tube is not None:
            return self.tube.point_labels[idx]
        return idx + 1

    def _resolve_point(self, ref) -> int:
        """Accept a 1-based vertex number or a tube point label."""
        if isinstance(ref, str) and self.tube is not None:
            try:
                return self.tube.point_labels.index(ref)
            except ValueError:
                raise ValueError(f"unknown point label {ref!r}") from None
        return int(ref) - 1

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        robot = data["robot"]
        dim = int(robot["dim"])
        edges = [(i, j) for i, j in robot["edges"]]
        simple = FrameworkGraph.from_one_based(int(robot["vertices"]), edges, dim)
        tube = None
        if robot["type"] == "tube":
            layout = TubeLayout(
                simple,
                tuple(v - 1 for v in robot["walk"]),
                total_length=float(robot["total_length"]),
            )
            modules = tuple(
                RollerModuleGeometry(
                    vertex=int(m["vertex"]) - 1,
                    arm_length=float(m["arm_length"]),
                    pinch_separation=float(m["pinch_separation"]),
                    tube_inside=float(m["tube_inside"]) if m.get("tube_inside") else None,
                )
                for m in robot["modules"]
            )
            tube = ExpandedTubeRobot(layout, modules)
            graph = tube.graph
            true_initial = np.asarray(robot["expanded_positions"], dtype=float).reshape(-1)
            nominal = np.asarray(
                robot.get("expanded_nominal", robot["expanded_positions"]), dtype=float
            ).reshape(-1)
        elif robot["type"] == "graph":
            graph = simple
            true_initial = np.asarray(robot["positions"], dtype=float).reshape(-1)
            nominal = np.asarray(
                robot.get("nominal_positions") or robot["positions"], dtype=float
            ).reshape(-1)
        else:
            raise ValueError(f"unknown robot type {robot['type']!r}")

        scenario = cls(
            name=data["name"],
            graph=graph,
            true_initial=true_initial,
            nominal=nominal,
            measurement_mode=data["measurement"]["mode"],
            noise_std=float(data["measurement"].get("noise_std", 0.0)),
            anchors=CentroidAtOrigin(),  # placeholder until resolved below
            objective=_objective_from_json(data["objective"], simple, true_initial, tube),
            constraint_map={},
            commands=[],
            estimation_options=_options_from_json(data["estimation"]),
            control_options=_options_from_json(data["control"]),
            inner=_inner_from_json(data["estimation"]),
            dt=float(data["dt"]),
            steps=int(data["steps"]),
            seed=int(data["seed"]),
            project_plan=bool(data.get("project_plan", True)),
            tube=tube,
            targets=list(data.get("targets") or []),
            edge_limits=tuple(data["edge_limits"]) if data.get("edge_limits") else None,
            max_edge_rate=data.get("max_edge_rate"),
            response_damping=float(data.get("response_damping", 0.02)),
        )
        scenario.anchors = _anchors_from_json(scenario, data["anchors"])
        scenario.constraint_map = {
            int(node) - 1: [_constraint_from_json(scenario, c) for c in cs]
            for node, cs in data.get("constraints", {}).items()
        }
        scenario.commands = [
            TimedCommand(
                start=float(c["start"]),
                end=float(c["end"]),
                target=scenario._resolve_point(c["target"]),
                v=np.asarray(c["v"], dtype=float),
            )
            for c in data.get("commands", [])
        ]
        return scenario

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


# --- json helpers ------------------------------------------------------------


def _options_to_json(options: AdmmOptions, inner: InnerSolverConfig | None) -> dict:
    out = {
        "alpha_p": options.alpha_p,
        "alpha_r": options.alpha_r,
        "iterations": options.iterations,
    }
    if inner is not None:
        out["inner_grad_tol"] = inner.grad_tol
        out["inner_max_iterations"] = inner.max_iterations
    return out


def _options_from_json(data: dict) -> AdmmOptions:
    return AdmmOptions(
        alpha_p=float(data.get("alpha_p", 1.0)),
        alpha_r=float(data.get("alpha_r", 1.0)),
        iterations=int(data.get("iterations", 200)),
    )


def _inner_from_json(data: dict) -> InnerSolverConfig:
    return InnerSolverConfig(
        grad_tol=float(data.get("inner_grad_tol", 1e-8)),
        max_iterations=int(data.get("inner_max_iterations", 500)),
    )


def _objective_to_json(obj: ControlObjective) -> dict:
    if isinstance(obj, MinEdgeRate):
        return {"type": "min-edge-rate"}
    if isinstance(obj, NominalTracking):
        return {"type": "nominal-tracking", "lengths": obj.nominal_lengths.tolist()}
    raise TypeError(f"unknown objective {obj!r}")


def _objective_from_json(data, simple, true_initial, tube) -> ControlObjective:
    kind = data["type"]
    if kind == "min-edge-rate":
        return MinEdgeRate()
    if kind == "nominal-tracking":
        lengths = data.get("lengths")
        if lengths == "initial" or lengths is None:
            if tube is not None:
                raise ValueError("nominal tracking applies to plain graph robots")
            lengths = edge_lengths(simple, true_initial)
        return NominalTracking(np.asarray(lengths, dtype=float))
    raise ValueError(f"unknown objective type {kind!r}")


def _anchors_to_json(sc: Scenario, anchors) -> dict:
    if isinstance(anchors, AxisPins):
        return {
            "type": "axis-pins",
            "pins": [[p.vertex + 1, _AXIS_NAMES[p.axis], p.value] for p in anchors.pins],
        }
    if isinstance(anchors, AnchoredNode):
        return {
            "type": "anchored-node",
            "vertex": anchors.vertex + 1,
            "position": anchors.position.tolist(),
        }
    if isinstance(anchors, CentroidAtOrigin):
        return {"type": "centroid", "holder": anchors.holder + 1}
    if isinstance(anchors, dict):  # tube robots: point pins grouped by holder
        pins = []
        for node, con in sorted(anchors.items()):
            for row, rhs in zip(con.A, con.b):
                idx = int(np.flatnonzero(row)[0])
                point, axis = divmod(idx, sc.graph.dim)
                pins.append([sc._point_name(point), _AXIS_NAMES[axis], float(rhs)])
        return {"type": "point-pins", "pins": pins}
    raise TypeError(f"unknown anchor spec {anchors!r}")


def _anchors_from_json(sc: Scenario, data: dict):
    kind = data["type"]
    if kind == "axis-pins":
        return AxisPins(
            tuple(AxisPin(int(v) - 1, _AXES[a], float(x)) for v, a, x in data["pins"])
        )
    if kind == "anchored-node":
        return AnchoredNode(int(data["vertex"]) - 1, np.asarray(data["position"], dtype=float))
    if kind == "centroid":
        return CentroidAtOrigin(holder=int(data.get("holder", 1)) - 1)
    if kind == "point-pins":
        if sc.tube is None:
            raise ValueError("point pins require a tube robot")
        from .admm import LocalConstraint

        d = sc.graph.dim
        grouped: dict[int, list[tuple[int, int, float]]] = {}
        for ref, axis_name, value in data["pins"]:
            point = sc._resolve_point(ref)
            holder = sc.tube.point_owner[point]
            grouped.setdefault(holder, []).append((point, _AXES[axis_name], float(value)))
        out = {}
        for holder, pins in grouped.items():
            A = np.zeros((len(pins), sc.tube.dimension))
            b = np.zeros(len(pins))
            for t, (pt, axis, value) in enumerate(pins):
                A[t, pt * d + axis] = 1.0
                b[t] = value
            out[holder] = LocalConstraint(A, b)
        return out
    raise ValueError(f"unknown anchor type {kind!r}")


def _constraint_to_json(sc: Scenario, c: VelocityConstraint) -> dict:
    if isinstance(c, FeetPinned):
        return {"type": "feet-pinned", "vertices": [sc._point_name(v) for v in c.vertices]}
    if isinstance(c, AxisRatePins):
        return {
            "type": "axis-rate-pins",
            "pins": [[sc._point_name(v), _AXIS_NAMES[a]] for v, a in c.pins],
        }
    if isinstance(c, NodeVelocity):
        return {"type": "node-velocity", "vertex": sc._point_name(c.vertex), "v": c.v.tolist()}
    if isinstance(c, CenterOfMass):
        return {"type": "center-of-mass", "masses": c.masses.tolist(), "v": c.v.tolist()}
    if isinstance(c, RawRows):
        return {"type": "raw", "A": c.A.tolist(), "b": c.b.tolist()}
    raise TypeError(f"cannot serialize constraint {c!r}")


def _constraint_from_json(sc: Scenario, data: dict) -> VelocityConstraint:
    kind = data["type"]
    if kind == "feet-pinned":
        return FeetPinned(tuple(sc._resolve_point(v) for v in data["vertices"]))
    if kind == "axis-rate-pins":
        return AxisRatePins(
            tuple((sc._resolve_point(v), _AXES[a]) for v, a in data["pins"])
        )
    if kind == "node-velocity":
        return NodeVelocity(sc._resolve_point(data["vertex"]), np.asarray(data["v"], dtype=float))
    if kind == "center-of-mass":
        return CenterOfMass(np.asarray(data["masses"], dtype=float), np.asarray(data["v"], dtype=float))
    if kind == "raw":
        return RawRows(np.asarray(data["A"], dtype=float), np.asarray(data["b"], dtype=float))
    raise ValueError(f"unknown constraint type {kind!r}")
