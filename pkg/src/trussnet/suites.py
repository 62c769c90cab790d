"""Preregistered experiment suites with fixed seeds and summary exports.

Each suite returns a plain dict of results; given an output directory it
also writes summary CSVs and figures.  Seeds are fixed so every number is
reproducible by rerunning the suite.
"""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np

from .admm import run_rounds
from .core import edge_lengths, edge_rate_map
from .estimation import classify_solution, estimate_state, mean_node_error
from .harness import build_estimation_problem, run_algorithm1, synthesize_measurements
from .oracle import centralized_solve
from .presets import (
    octahedron_scenario,
    six_node_control_scenario,
    triangle_teleop_scenario,
)
from .report import render_table_figure, write_table_csv
from .teleop import headless_replay

SUITE_NAMES = (
    "octahedron-noise",
    "init-perturbation",
    "control-convergence",
    "integrated-2d",
    "isoperimetric-teleop-script",
)

NOISE_LEVELS = (0.01, 0.25, 0.50)
PERTURBATION_LEVELS = (0.1, 0.2, 0.4, 0.8, 1.6)


def _estimate_once(mode: str, noise: float, seed: int):
    """One estimation run on the perturbed octahedron; returns (error, sec/round)."""
    sc = octahedron_scenario(mode=mode, noise_std=noise, seed=seed)
    rng = np.random.default_rng(sc.seed)
    measurements = synthesize_measurements(sc, sc.true_initial, rng)
    problem = build_estimation_problem(sc, measurements)
    t0 = time.perf_counter()
    result = estimate_state(problem, sc.graph, sc.nominal, truth=sc.true_initial, record_cost=False)
    elapsed = time.perf_counter() - t0
    return result.error, elapsed / max(1, problem.options.iterations)


def octahedron_noise_suite(out_dir=None, *, seeds: int = 20, plots: bool = True) -> dict:
    """Reconstruction error of both measurement modes across noise levels."""
    levels = (0.0,) + NOISE_LEVELS
    table = {}
    round_seconds = {}
    for mode in ("relative-position", "relative-distance"):
        for noise in levels:
            errors = []
            secs = []
            for seed in range(seeds):
                err, sec = _estimate_once(mode, noise, 1000 + seed)
                errors.append(err)
                secs.append(sec)
            table[(mode, noise)] = (float(np.mean(errors)), float(np.std(errors)))
            round_seconds[(mode, noise)] = float(np.mean(secs))
    rows = [
        [mode, noise, table[(mode, noise)][0], table[(mode, noise)][1],
         round_seconds[(mode, noise)]]
        for mode in ("relative-position", "relative-distance")
        for noise in levels
    ]
    columns = ["mode", "noise_std", "mean_error", "std_error", "seconds_per_round"]
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_table_csv(rows, columns, out / "octahedron_noise.csv")
        if plots:
            fig_rows = [
                [noise,
                 table[("relative-position", noise)][0],
                 table[("relative-distance", noise)][0]]
                for noise in levels
            ]
            render_table_figure(
                fig_rows, ["noise", "relative-position", "relative-distance"],
                "mean reconstruction error vs noise", out / "octahedron_noise.png",
            )
    time_ratio = (
        round_seconds[("relative-distance", 0.0)] / round_seconds[("relative-position", 0.0)]
    )
    return {
        "levels": levels,
        "errors": table,
        "seconds_per_round": round_seconds,
        "quadratic_general_round_ratio": time_ratio,
        "rows": rows,
        "columns": columns,
    }


def init_perturbation_suite(out_dir=None, *, trials: int = 15, plots: bool = True) -> dict:
    """Success fraction of distance-based reconstruction vs initial-guess spread."""
    sc = octahedron_scenario(mode="relative-distance", noise_std=0.0)
    rng0 = np.random.default_rng(sc.seed)
    measurements = synthesize_measurements(sc, sc.true_initial, rng0)
    problem = build_estimation_problem(sc, measurements)
    measured = edge_lengths(sc.graph, sc.true_initial)
    results = {}
    for sigma in PERTURBATION_LEVELS:
        wins = 0
        consistent_losses = 0
        for trial in range(trials):
            rng = np.random.default_rng(5000 + 37 * trial + int(sigma * 1000))
            guess = sc.nominal + sigma * rng.standard_normal(sc.nominal.size)
            result = estimate_state(problem, sc.graph, guess, truth=sc.true_initial, record_cost=False)
            report = classify_solution(
                sc.graph, result.estimates[0], sc.true_initial, measured
            )
            if report.converged_to_truth:
                wins += 1
            elif report.length_consistent:
                consistent_losses += 1
        results[sigma] = {"success": wins, "trials": trials, "alternate": consistent_losses}
    rows = [[s, results[s]["success"], results[s]["trials"], results[s]["alternate"]]
            for s in PERTURBATION_LEVELS]
    columns = ["sigma", "converged_to_truth", "trials", "length_consistent_alternates"]
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_table_csv(rows, columns, out / "init_perturbation.csv")
        if plots:
            fig_rows = [[s, results[s]["success"] / results[s]["trials"]] for s in PERTURBATION_LEVELS]
            render_table_figure(
                fig_rows, ["sigma", "success fraction"],
                "convergence to truth vs initial-guess spread",
                out / "init_perturbation.png", kind="line",
            )
    return {"levels": PERTURBATION_LEVELS, "results": results, "rows": rows, "columns": columns}


def control_convergence_suite(out_dir=None, *, plots: bool = True) -> dict:
    """One control solve with per-round traces, against the centralized answer."""
    from .control import build_control_problem
    from .harness import step_constraints

    sc = six_node_control_scenario(noise_std=0.0)
    commands = [(c.target, c.v) for c in sc.active_commands(0.0)]
    per_node = step_constraints(sc, commands, None, sc.true_initial)
    problem = build_control_problem(
        sc.graph, sc.true_initial, sc.objective, per_node, sc.control_options
    )
    t0 = time.perf_counter()
    plans, diag = run_rounds(problem, np.zeros(problem.dimension), record_states=True)
    elapsed = time.perf_counter() - t0
    reference = centralized_solve(problem.costs, problem.constraints, problem.dimension)
    rel = [float(np.linalg.norm(p - reference) / np.linalg.norm(reference)) for p in plans]
    apex_copies = diag.states[:, :, 10:12]  # every node's copy of the apex velocity
    rows = [
        [k,
         float(np.max(np.abs(apex_copies[k] - reference[10:12]))),
         float(diag.consensus_residual[k]),
         float(np.max(diag.constraint_violation[k])),
         float(np.max(diag.centralized_cost[k]))]
        for k in range(apex_copies.shape[0])
    ]
    columns = ["round", "apex_copy_error", "consensus_residual", "constraint_violation",
               "centralized_cost"]
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_table_csv(rows, columns, out / "control_convergence.csv")
        if plots:
            import matplotlib.pyplot as plt

            fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
            rounds = np.arange(apex_copies.shape[0])
            for i in range(apex_copies.shape[1]):
                axes[0].plot(rounds, apex_copies[:, i, 0], lw=0.8)
            axes[0].axhline(reference[10], color="k", ls="--", lw=0.8)
            axes[0].set_title("per-node copy of apex x-velocity")
            axes[1].semilogy(rounds, np.max(diag.constraint_violation, axis=1))
            axes[1].set_title("constraint violation")
            axes[2].plot(rounds, np.max(diag.centralized_cost, axis=1))
            axes[2].set_title("total cost at local copies")
            for ax in axes:
                ax.set_xlabel("round")
            fig.savefig(out / "control_convergence.png", dpi=150, bbox_inches="tight")
            plt.close(fig)
    return {
        "relative_gap": rel,
        "consensus_residual": float(diag.consensus_residual[-1]),
        "constraint_violation": float(np.max(diag.constraint_violation[-1])),
        "seconds": elapsed,
        "reference": reference,
        "plans": plans,
        "rows": rows,
        "columns": columns,
    }


def integrated_2d_suite(out_dir=None, *, plots: bool = True, seed: int = 4) -> dict:
    """The apex out-and-back task at increasing measurement noise."""
    from .report import export_run

    levels = (0.0, 0.01, 0.25, 0.50)
    results = {}
    for noise in levels:
        sc = six_node_control_scenario(noise_std=noise, seed=seed)
        record = run_algorithm1(sc)
        apex = record.trajectory_of(5, 2)
        start = sc.true_initial.reshape(6, 2)[5]
        t2_index = int(round(2.0 / sc.dt)) - 1
        displacement = float(apex[t2_index, 0] - start[0])
        final_gap = float(np.linalg.norm(apex[-1] - start))
        results[noise] = {
            "displacement_at_2s": displacement,
            "final_distance_to_start": final_gap,
            "record": record,
        }
        if out_dir is not None:
            export_run(record, sc, Path(out_dir) / f"integrated_noise_{noise:g}", plots=plots)
    rows = [[noise, results[noise]["displacement_at_2s"],
             results[noise]["final_distance_to_start"]] for noise in levels]
    columns = ["noise_std", "displacement_at_2s", "final_distance_to_start"]
    if out_dir is not None:
        write_table_csv(rows, columns, Path(out_dir) / "integrated_2d.csv")
    return {"levels": levels, "results": results, "rows": rows, "columns": columns}


def teleop_script_suite(out_dir=None, *, plots: bool = True) -> dict:
    """Headless replay of the scripted left-then-right steering session."""
    from .report import export_run

    sc = triangle_teleop_scenario()
    a3 = sc.tube.point_of[(2, "A")]
    log = []
    for k in range(sc.steps):
        t = k * sc.dt
        active = sc.active_commands(t)
        if active:
            log.append({"t": t, "node": sc.tube.point_labels[a3], "v": active[-1].v.tolist()})
    record = headless_replay(sc, log, a3)
    traj = record.trajectory_of(a3, 2)
    left_end_index = int(round(2.0 / sc.dt)) - 1
    left_target = np.asarray(sc.targets[0]["center"])
    right_target = np.asarray(sc.targets[1]["center"])
    summary = {
        "left_gap": float(np.linalg.norm(traj[left_end_index] - left_target)),
        "right_gap": float(np.linalg.norm(traj[-1] - right_target)),
        "max_perimeter_error": float(max(s.perimeter_error for s in record.steps)),
        "max_q_residual": float(max(s.max_q_residual for s in record.steps)),
        "record": record,
        "scenario": sc,
        "log": log,
    }
    if out_dir is not None:
        export_run(record, sc, Path(out_dir) / "teleop_script", plots=plots)
        rows = [[k, s.perimeter_error, s.max_q_residual] for k, s in enumerate(record.steps)]
        write_table_csv(rows, ["step", "perimeter_error", "max_q_residual"],
                        Path(out_dir) / "teleop_conservation.csv")
    return summary


def run_experiment_suite(name: str, out_dir=None, *, plots: bool = True, **kwargs) -> dict:
    """Dispatch a named suite; raises on unknown names."""
    if name == "octahedron-noise":
        return octahedron_noise_suite(out_dir, plots=plots, **kwargs)
    if name == "init-perturbation":
        return init_perturbation_suite(out_dir, plots=plots, **kwargs)
    if name == "control-convergence":
        return control_convergence_suite(out_dir, plots=plots, **kwargs)
    if name == "integrated-2d":
        return integrated_2d_suite(out_dir, plots=plots, **kwargs)
    if name == "isoperimetric-teleop-script":
        return teleop_script_suite(out_dir, plots=plots, **kwargs)
    raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITE_NAMES)}")
