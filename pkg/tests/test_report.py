import csv
import dataclasses
import json

from trussnet.harness import run_algorithm1
from trussnet.presets import six_node_control_scenario, triangle_teleop_scenario
from trussnet.report import export_run, render_run_figures, write_metrics_csv, write_trajectory_csv


def short_run():
    sc = dataclasses.replace(six_node_control_scenario(), steps=3)
    return sc, run_algorithm1(sc)


def test_metrics_csv_schema(tmp_path):
    sc, record = short_run()
    path = tmp_path / "metrics.csv"
    write_metrics_csv(record, path)
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    assert set(rows[0]) >= {
        "step", "t", "est_seconds", "ctl_seconds", "est_consensus",
        "ctl_consensus", "mean_estimation_error",
    }


def test_trajectory_csv_schema(tmp_path):
    sc, record = short_run()
    path = tmp_path / "trajectory.csv"
    write_trajectory_csv(record, sc, path)
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3 * 6
    assert set(rows[0]) == {"step", "node", "x", "y", "vx", "vy"}


def test_tube_metrics_include_conservation_columns(tmp_path):
    import numpy as np

    sc = dataclasses.replace(triangle_teleop_scenario(), steps=2)
    sc = dataclasses.replace(
        sc,
        estimation_options=dataclasses.replace(sc.estimation_options, iterations=20),
        control_options=dataclasses.replace(sc.control_options, iterations=30),
    )
    record = run_algorithm1(sc)
    path = tmp_path / "metrics.csv"
    write_metrics_csv(record, path)
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    assert "perimeter_error" in rows[0]
    assert "max_q_residual" in rows[0]


def test_export_run_writes_everything(tmp_path):
    sc, record = short_run()
    export_run(record, sc, tmp_path)
    names = {p.name for p in tmp_path.iterdir()}
    assert {"metrics.csv", "trajectory.csv", "diagnostics.json",
            "trajectory.png", "residuals.png"} <= names
    data = json.loads((tmp_path / "diagnostics.json").read_text())
    assert len(data["steps"]) == 3


def test_figures_are_nonempty(tmp_path):
    sc, record = short_run()
    written = render_run_figures(record, sc, tmp_path)
    assert len(written) == 2
    for path in written:
        assert path.stat().st_size > 1000
