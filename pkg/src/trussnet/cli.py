"""Command-line entry points.

Subcommands:
  estimate   one shape-estimation phase on a scenario
  control    one velocity-coordination solve on a scenario
  run        the full measure/estimate/coordinate/act loop
  suite      a named preregistered experiment suite
  serve      the interactive teleoperation service
  export-scenarios   write the shipped scenario files

Common flags: --scenario, --seed, --iters, --alpha-p, --alpha-r, --out,
--deterministic (sequential node order; the default), --parallel.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .admm import AdmmOptions, run_rounds
from .harness import build_estimation_problem, run_algorithm1, step_constraints, synthesize_measurements
from .oracle import centralized_solve
from .report import export_run, render_run_figures, write_table_csv
from .scenario import Scenario
from .suites import SUITE_NAMES, run_experiment_suite


def _load_scenario(args) -> Scenario:
    scenario = Scenario.load(args.scenario)
    if getattr(args, "deterministic", False):
        args.parallel = False
    if args.seed is not None:
        scenario.seed = args.seed
    def tweak(options: AdmmOptions) -> AdmmOptions:
        return dataclasses.replace(
            options,
            alpha_p=args.alpha_p if args.alpha_p is not None else options.alpha_p,
            alpha_r=args.alpha_r if args.alpha_r is not None else options.alpha_r,
            iterations=args.iters if args.iters is not None else options.iterations,
        )
    scenario.estimation_options = tweak(scenario.estimation_options)
    scenario.control_options = tweak(scenario.control_options)
    return scenario


def _out_dir(args, scenario: Scenario, phase: str) -> Path:
    out = Path(args.out) if args.out else Path("runs") / f"{scenario.name}-{phase}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_estimate(args) -> int:
    scenario = _load_scenario(args)
    rng = np.random.default_rng(scenario.seed)
    measurements = synthesize_measurements(scenario, scenario.true_initial, rng)
    problem = build_estimation_problem(scenario, measurements)
    estimates, diag = run_rounds(
        problem, np.tile(scenario.nominal, (scenario.num_nodes, 1)),
        parallel=args.parallel, record_cost=False,
    )
    dim = scenario.graph.dim
    err = float(
        np.mean(
            np.linalg.norm((estimates[0] - scenario.true_initial).reshape(-1, dim), axis=1)
        )
    )
    out = _out_dir(args, scenario, "estimate")
    rows = [
        [i + 1] + estimates[i].tolist()
        for i in range(len(estimates))
    ]
    write_table_csv(rows, ["node"] + [f"x{t}" for t in range(estimates[0].size)],
                    out / "estimates.csv")
    (out / "estimation.json").write_text(json.dumps({
        "scenario": scenario.name,
        "mean_node_error": err,
        "consensus_residual": float(diag.consensus_residual[-1]),
        "constraint_violation": float(np.max(diag.constraint_violation[-1])),
    }, indent=2) + "\n")
    print(f"mean node error vs truth: {err:.3e}")
    print(f"final consensus residual: {diag.consensus_residual[-1]:.3e}")
    print(f"outputs in {out}")
    return 0


def cmd_control(args) -> int:
    from .control import build_control_problem
    from .isoperimetric import build_isoperimetric_control_problem

    scenario = _load_scenario(args)
    commands = [(c.target, c.v) for c in scenario.active_commands(0.0)]
    per_node = step_constraints(scenario, commands, None, scenario.true_initial)
    if scenario.tube is None:
        problem = build_control_problem(
            scenario.graph, scenario.true_initial, scenario.objective, per_node,
            scenario.control_options,
        )
    else:
        problem = build_isoperimetric_control_problem(
            scenario.tube, scenario.true_initial, scenario.objective, per_node,
            scenario.control_options,
        )
    plans, diag = run_rounds(
        problem, np.zeros(problem.dimension), parallel=args.parallel, record_cost=False
    )
    reference = centralized_solve(problem.costs, problem.constraints, problem.dimension)
    rel = max(
        float(np.linalg.norm(p - reference)) / max(1e-12, float(np.linalg.norm(reference)))
        for p in plans
    )
    out = _out_dir(args, scenario, "control")
    rows = [[i + 1] + plans[i].tolist() for i in range(len(plans))]
    write_table_csv(rows, ["node"] + [f"v{t}" for t in range(plans[0].size)], out / "plans.csv")
    (out / "control.json").write_text(json.dumps({
        "scenario": scenario.name,
        "relative_gap_to_centralized": rel,
        "consensus_residual": float(diag.consensus_residual[-1]),
        "constraint_violation": float(np.max(diag.constraint_violation[-1])),
    }, indent=2) + "\n")
    print(f"max relative gap to centralized: {rel:.3e}")
    print(f"final consensus residual: {diag.consensus_residual[-1]:.3e}")
    print(f"outputs in {out}")
    return 0


def cmd_run(args) -> int:
    scenario = _load_scenario(args)
    record = run_algorithm1(scenario, record_curves=args.curves)
    out = _out_dir(args, scenario, "run")
    export_run(record, scenario, out, plots=not args.no_plots)
    last = record.steps[-1]
    print(f"{len(record.steps)} steps complete")
    print(f"final estimation error: {last.mean_estimation_error:.3e}")
    if last.perimeter_error is not None:
        print(f"final perimeter drift: {last.perimeter_error:.3e}")
    print(f"outputs in {out}")
    return 0


def cmd_suite(args) -> int:
    out = Path(args.out) if args.out else Path("runs") / f"suite-{args.name}"
    out.mkdir(parents=True, exist_ok=True)
    summary = run_experiment_suite(args.name, out, plots=not args.no_plots)
    printable = {
        k: v for k, v in summary.items()
        if isinstance(v, (int, float, str, list, tuple)) and k not in ("rows",)
    }
    print(json.dumps(printable, default=str, indent=2))
    print(f"outputs in {out}")
    return 0


def cmd_serve(args) -> int:
    from .teleop import serve

    scenario = _load_scenario(args)
    point = scenario._resolve_point(args.node)
    print(f"serving {scenario.name} on ws://{args.host}:{args.port}/ws "
          f"(steering {args.node} at {args.hz} Hz)")
    serve(scenario, point, args.port, hz=args.hz, host=args.host)
    return 0


def cmd_export_scenarios(args) -> int:
    from .presets import (
        octahedron_scenario,
        six_node_control_scenario,
        triangle_teleop_scenario,
    )

    out = Path(args.dir)
    out.mkdir(parents=True, exist_ok=True)
    six_node_control_scenario().save(out / "six_node_control.json")
    octahedron_scenario("relative-position").save(out / "octahedron_position.json")
    octahedron_scenario("relative-distance").save(out / "octahedron_distance.json")
    triangle_teleop_scenario().save(out / "triangle_teleop.json")
    print(f"wrote 4 scenarios to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trussnet", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario_required=True):
        p.add_argument("--scenario", required=scenario_required, help="scenario JSON path")
        p.add_argument("--seed", type=int, default=None, help="override scenario seed")
        p.add_argument("--iters", type=int, default=None, help="override round counts")
        p.add_argument("--alpha-p", type=float, default=None, dest="alpha_p")
        p.add_argument("--alpha-r", type=float, default=None, dest="alpha_r")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--deterministic", action="store_true",
                       help="sequential node order (the default; kept for scripts)")
        p.add_argument("--parallel", action="store_true",
                       help="advance nodes on a thread pool within each round")
        p.add_argument("--no-plots", action="store_true", help="skip figure rendering")

    p = sub.add_parser("estimate", help="one estimation phase")
    common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("control", help="one control solve")
    common(p)
    p.set_defaults(func=cmd_control)

    p = sub.add_parser("run", help="full control loop over the command script")
    common(p)
    p.add_argument("--curves", action="store_true", help="record per-round curves every step")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("suite", help="preregistered experiment suite")
    p.add_argument("name", choices=SUITE_NAMES)
    p.add_argument("--out", default=None)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("serve", help="teleoperation service")
    common(p)
    p.add_argument("--node", required=True, help="steered vertex number or point label")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--hz", type=float, default=10.0)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("export-scenarios", help="write the shipped scenario files")
    p.add_argument("--dir", default="scenarios")
    p.set_defaults(func=cmd_export_scenarios)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
