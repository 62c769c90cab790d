"""Run outputs: delimited data files plus rendered figures.

The CSV/JSON files are the contract; the PNG figures rendered next to them
are a convenience for eyeballing runs and suite summaries.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .harness import RunRecord
from .scenario import Scenario


def write_metrics_csv(record: RunRecord, path) -> None:
    path = Path(path)
    tube = any(s.perimeter_error is not None for s in record.steps)
    fields = [
        "step", "t", "est_seconds", "ctl_seconds",
        "est_consensus", "ctl_consensus", "est_violation", "ctl_violation",
        "mean_estimation_error",
    ]
    if tube:
        fields += ["perimeter_error", "max_q_residual"]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for s in record.steps:
            row = [
                s.step, f"{s.t:.6f}", f"{s.est_seconds:.6f}", f"{s.ctl_seconds:.6f}",
                f"{s.est_consensus:.3e}", f"{s.ctl_consensus:.3e}",
                f"{s.est_violation:.3e}", f"{s.ctl_violation:.3e}",
                f"{s.mean_estimation_error:.3e}",
            ]
            if tube:
                row += [f"{s.perimeter_error:.3e}", f"{s.max_q_residual:.3e}"]
            writer.writerow(row)


def write_trajectory_csv(record: RunRecord, scenario: Scenario, path) -> None:
    """Per-step node positions and measured velocities."""
    path = Path(path)
    dim = scenario.graph.dim
    labels = (
        list(scenario.tube.point_labels)
        if scenario.tube is not None
        else [str(i + 1) for i in range(scenario.graph.n)]
    )
    header = ["step", "node", "x", "y"] + (["z"] if dim == 3 else [])
    header += ["vx", "vy"] + (["vz"] if dim == 3 else [])
    prev = scenario.true_initial.reshape(-1, dim)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for s in record.steps:
            pts = s.true_x.reshape(-1, dim)
            vel = (pts - prev) / record.dt
            for idx, label in enumerate(labels):
                row = [s.step, label]
                row += [f"{v:.9f}" for v in pts[idx]]
                row += [f"{v:.9f}" for v in vel[idx]]
                writer.writerow(row)
            prev = pts


def write_diagnostics_json(record: RunRecord, path) -> None:
    Path(path).write_text(json.dumps(record.to_dict()) + "\n")


def _draw_robot(ax, scenario: Scenario, x, **kwargs):
    dim = scenario.graph.dim
    graph = scenario.graph if scenario.tube is None else scenario.tube.graph
    pts = np.asarray(x).reshape(-1, dim)
    for i, j in graph.edges:
        ax.plot([pts[i, 0], pts[j, 0]], [pts[i, 1], pts[j, 1]], **kwargs)
    ax.scatter(pts[:, 0], pts[:, 1], s=12, color=kwargs.get("color", "k"), zorder=3)


def render_run_figures(record: RunRecord, scenario: Scenario, out_dir) -> list[Path]:
    """Trajectory snapshot and per-step residual curves as PNG files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    dim = scenario.graph.dim

    if dim == 2 and record.steps:
        fig, ax = plt.subplots(figsize=(6, 5))
        _draw_robot(ax, scenario, scenario.true_initial, color="0.7", lw=1)
        _draw_robot(ax, scenario, record.final_x, color="C0", lw=1.5)
        n_pts = record.final_x.size // dim
        for idx in range(n_pts):
            traj = record.trajectory_of(idx, dim)
            ax.plot(traj[:, 0], traj[:, 1], color="C1", lw=0.6, alpha=0.6)
        for target in scenario.targets:
            cx, cy = target["center"]
            circle = plt.Circle((cx, cy), target["radius"], fill=False, color="C3", ls="--")
            ax.add_patch(circle)
        ax.set_aspect("equal")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.set_title(f"{record.scenario_name}: initial (grey) to final (blue)")
        path = out_dir / "trajectory.png"
        fig.savefig(path, dpi=150, bbox_inches="tight")
        plt.close(fig)
        written.append(path)

    if record.steps:
        fig, ax = plt.subplots(figsize=(6, 4))
        steps = [s.step for s in record.steps]
        ax.semilogy(steps, [max(s.est_consensus, 1e-16) for s in record.steps], label="estimation consensus")
        ax.semilogy(steps, [max(s.ctl_consensus, 1e-16) for s in record.steps], label="control consensus")
        ax.semilogy(steps, [max(s.mean_estimation_error, 1e-16) for s in record.steps], label="mean estimation error")
        if any(s.perimeter_error is not None for s in record.steps):
            ax.semilogy(steps, [max(s.perimeter_error, 1e-16) for s in record.steps], label="perimeter drift")
        ax.set_xlabel("step")
        ax.legend(fontsize=8)
        ax.set_title("per-step residuals")
        path = out_dir / "residuals.png"
        fig.savefig(path, dpi=150, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    return written


def export_run(record: RunRecord, scenario: Scenario, out_dir, *, plots: bool = True) -> None:
    """Write metrics.csv, trajectory.csv, diagnostics.json and figures."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(record, out_dir / "metrics.csv")
    write_trajectory_csv(record, scenario, out_dir / "trajectory.csv")
    write_diagnostics_json(record, out_dir / "diagnostics.json")
    if plots:
        render_run_figures(record, scenario, out_dir)


def render_table_figure(rows, columns, title, path, kind="bar") -> Path:
    """Small summary chart for suite tables (one numeric series per column)."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    x = np.arange(len(rows))
    labels = [str(r[0]) for r in rows]
    width = 0.8 / max(1, len(columns) - 1)
    for c, name in enumerate(columns[1:]):
        vals = [float(r[c + 1]) for r in rows]
        if kind == "bar":
            ax.bar(x + c * width, vals, width, label=name)
        else:
            ax.plot(x, vals, marker="o", label=name)
    ax.set_xticks(x + (0.4 - width / 2 if kind == "bar" else 0))
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def write_table_csv(rows, columns, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        writer.writerows(rows)
