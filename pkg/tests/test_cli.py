"""End-to-end runs of the command-line interface in temporary directories."""

import subprocess
import sys

import numpy as np
import pytest

from qlmfloquet.cli import main
from qlmfloquet.engine import TimeSeries

QUENCH4 = """
[lattice]
n_sites = 4

[couplings]
j = 1.0
k = 4.0

[drive]
protocol = quench
spacing = 0.05
n_periods = 20

[run]
initial = uduududu
"""

FULL4 = """
[lattice]
n_sites = 4

[drive]
protocol = full
frequency = 6.2
n_periods = 10
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_run_produces_deterministic_outputs(tmp_path, capsys):
    cfg = write(tmp_path, "run.ini", QUENCH4)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["run", "--config", str(cfg), "--out", str(out_a)]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(out_b)]) == 0
    csv_a = (out_a / "timeseries.csv").read_bytes()
    assert csv_a == (out_b / "timeseries.csv").read_bytes()
    assert (out_a / "resolved.ini").exists()
    assert (out_a / "violG.dat").exists()
    ts = TimeSeries.from_csv(out_a / "timeseries.csv")
    assert ts.steps[-1] == 20
    assert "G_0" in ts.columns


def test_run_with_selected_observables(tmp_path):
    cfg = write(tmp_path, "run.ini", QUENCH4 + "observables = violG,violS\n")
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    ts = TimeSeries.from_csv(out / "timeseries.csv")
    assert sorted(ts.columns) == ["violG", "violS"]
    assert (out / "violG.dat").exists()
    assert not (out / "G_0.dat").exists()


def test_run_with_no_observables_keeps_header_only(tmp_path):
    cfg = write(tmp_path, "run.ini", QUENCH4 + "observables =\n")
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "timeseries.csv").read_text() == "step,t\n"


def test_run_rejects_unknown_observable(tmp_path, capsys):
    cfg = write(tmp_path, "run.ini", QUENCH4 + "observables = bogus\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "bogus" in capsys.readouterr().err


def test_missing_config_exits_with_error(tmp_path, capsys):
    code = main(["run", "--config", str(tmp_path / "no.ini"), "--out", str(tmp_path / "o")])
    assert code == 2
    assert capsys.readouterr().err.startswith("error:")


def test_sweep_tabulates_lifetimes(tmp_path, capsys):
    cfg = write(tmp_path, "run.ini", QUENCH4)
    out = tmp_path / "sweep"
    code = main([
        "sweep", "--config", str(cfg), "--out", str(out),
        "--parameter", "drive.spacing", "--values", "0.05,0.1",
        "--column", "nd_0", "--threshold", "0.9",
    ])
    assert code == 0
    rows = (out / "sweep.csv").read_text().strip().splitlines()
    assert rows[0] == "value,lifetime,status"
    assert len(rows) == 3
    assert (out / "spacing-0.05" / "timeseries.csv").exists()
    assert (out / "spacing-0.1" / "resolved.ini").exists()


def test_sweep_reports_per_value_failures(tmp_path, capsys):
    cfg = write(tmp_path, "run.ini", QUENCH4)
    out = tmp_path / "sweep"
    code = main([
        "sweep", "--config", str(cfg), "--out", str(out),
        "--parameter", "run.initial", "--values", "uduududu,xxxxxxxx",
        "--column", "nd_0", "--threshold", "0.9",
    ])
    assert code == 3
    rows = (out / "sweep.csv").read_text().strip().splitlines()
    assert rows[1].endswith("ok") or "censored" in rows[1]
    assert "error" in rows[2]


def test_qmm_compare_matches_first_order(tmp_path, capsys):
    text = """
[lattice]
n_sites = 6

[drive]
protocol = effective
base = full
orders = 0,1
frequency = 6.2
n_periods = 50

[run]
initial = uduudududu du
"""
    cfg = write(tmp_path, "run.ini", text)
    out = tmp_path / "cmp"
    assert main(["qmm-compare", "--config", str(cfg), "--out", str(out)]) == 0
    report = (out / "report.txt").read_text()
    worst = float(report.strip().splitlines()[-1].split()[1])
    assert worst < 1e-8
    assert (out / "full_trace.csv").exists()
    assert (out / "qmm_trace.csv").exists()


def test_magnus_check_reports_slopes(tmp_path, capsys):
    text = """
[lattice]
n_sites = 3
boundary = OBC

[drive]
protocol = simple
spacing = 0.05
"""
    cfg = write(tmp_path, "run.ini", text)
    out = tmp_path / "mc"
    code = main([
        "magnus-check", "--config", str(cfg), "--out", str(out),
        "--ladder", "0.16,0.08,0.04",
    ])
    assert code == 0
    report = (out / "report.txt").read_text()
    assert "order 0: slope" in report
    assert "order 1: slope" in report
    rows = (out / "defects.csv").read_text().strip().splitlines()
    assert rows[0].startswith("spacing,")
    assert len(rows) == 4


def test_spectrum_command(tmp_path, capsys):
    out = tmp_path / "spec"
    assert main(["spectrum", "--segments", "3,3", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "degenerate x2" in text
    assert (out / "report.txt").read_text() == text


def test_fit_command(tmp_path, capsys):
    t = np.linspace(1.0, 10.0, 50)
    ts = TimeSeries(np.arange(50), t, {"y": 3.0 * t**2, "d": np.exp(-t)}, {})
    csv = tmp_path / "series.csv"
    ts.to_csv(csv)
    assert main(["fit", "--csv", str(csv), "--column", "y"]) == 0
    out_text = capsys.readouterr().out
    assert out_text.startswith("exponent 2.000000")
    assert main([
        "fit", "--csv", str(csv), "--column", "d", "--kind", "lifetime",
        "--threshold", str(float(np.exp(-2.0))),
    ]) == 0
    line = capsys.readouterr().out
    assert line.startswith("lifetime 2")


def test_console_script_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "qlmfloquet.cli", "spectrum", "--segments", "2"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "segments: [2]" in proc.stdout
