import subprocess
import sys

import numpy as np
import pytest

from vesicleflow import cli
from vesicleflow import dynamics as dyn
from vesicleflow.persistence import load_checkpoint, read_csv_columns

SMALL = """
grid: {resolution: 24}
model: {mu: 1.0}
step: {dt: 2.0e-5, scheme: imex_bdf2}
initial_condition: {kind: tanh_ellipse, axes: [0.3, 0.2]}
initial_velocity: {kind: random_solenoidal, seed: 3, amplitude: 0.1, band: 3}
t_end: 0.0008
record_every: 4
checkpoint_every: 20
criteria: [{kind: serrin_velocity, p: 4, s: 8}]
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(SMALL)
    return path


def test_simulate_writes_monotone_diagnostics(tmp_path, config, capsys):
    out = tmp_path / "out"
    assert cli.main(["simulate", "--config", str(config), "--output", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "alpha = " in printed and "beta = " in printed
    _, c = read_csv_columns(out / "diagnostics.csv")
    assert np.all(np.diff(c["t"]) > 0) and c["t"][-1] == pytest.approx(0.0008)
    assert np.all(np.diff(c["total"]) <= 1e-10 * abs(c["total"][0]))
    assert (out / "final.bin").exists() and (out / "checkpoint_00000020.bin").exists()
    assert (out / "config.yaml").exists() and (out / "run.log").exists()
    assert "crit_serrin_velocity_p4_s8" in c


def test_resume_reproduces_the_continuous_run(tmp_path, config):
    full, split = tmp_path / "full", tmp_path / "split"
    assert cli.main(["simulate", "--config", str(config), "--output", str(full)]) == 0
    assert cli.main(["simulate", "--config", str(config), "--output", str(split), "--t-end", "0.0004"]) == 0
    assert cli.main(["simulate", "--config", str(config), "--output", str(split),
                     "--resume", str(split / "final.bin")]) == 0
    a, b = load_checkpoint(full / "final.bin"), load_checkpoint(split / "final.bin")
    assert np.max(np.abs(a.phi - b.phi)) <= 1e-12 and np.max(np.abs(a.u - b.u)) <= 1e-12
    _, ca = read_csv_columns(full / "diagnostics.csv")
    _, cb = read_csv_columns(split / "diagnostics.csv")
    np.testing.assert_array_equal(ca["t"], cb["t"])


def test_criteria_of_a_fluid_at_rest_are_zero(tmp_path, capsys):
    cfg = tmp_path / "rest.yaml"
    cfg.write_text("grid: {resolution: 16}\ninitial_condition: {kind: constant, c: 1.0}\n"
                   "t_end: 0.001\nrecord_every: 2\n")
    out = tmp_path / "rest"
    assert cli.main(["simulate", "--config", str(cfg), "--output", str(out)]) == 0
    capsys.readouterr()
    assert cli.main(["criteria", "--config", str(cfg), "--output", str(out),
                     "--criterion", "serrin_velocity:4:8", "--criterion", "log_gradient:3:4"]) == 0
    lines = capsys.readouterr().out.split("\n")
    assert "serrin_velocity_p4_s8 0" in lines and "log_gradient_p3_s4 0" in lines
    assert (out / "criteria.csv").exists()


def test_report_summary_keys(tmp_path, config, capsys):
    out = tmp_path / "out"
    cli.main(["simulate", "--config", str(config), "--output", str(out)])
    capsys.readouterr()
    assert cli.main(["report", "--config", str(config), "--output", str(out)]) == 0
    keys = {line.split()[0] for line in capsys.readouterr().out.splitlines()}
    assert {"E(0)", "E(t_end)", "sup_higher_order", "mean_velocity_drift",
            "max_energy_law_residual"} <= keys
    assert (out / "summary.txt").exists() and (out / "report_series.csv").exists()


def test_invalid_config_is_one_error_line(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("model: {epsilon: -1}\n")
    assert cli.main(["simulate", "--config", str(bad), "--output", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert err[-1].startswith("ERROR ConfigError: model.epsilon")


def test_invalid_criterion_exit_code(tmp_path, config, capsys):
    out = tmp_path / "out"
    cli.main(["simulate", "--config", str(config), "--output", str(out)])
    rc = cli.main(["criteria", "--config", str(config), "--output", str(out), "--criterion", "serrin_velocity:4:4"])
    assert rc == 2
    assert "3/p + 2/s <= 1" in capsys.readouterr().err


def test_divergence_exit_code_and_checkpoint(tmp_path, config, capsys, monkeypatch):
    monkeypatch.setattr(dyn, "BLOWUP_THRESHOLD", 0.5)
    out = tmp_path / "out"
    assert cli.main(["simulate", "--config", str(config), "--output", str(out)]) == 3
    assert "ERROR SimulationDiverged: divergence detected" in capsys.readouterr().err
    assert load_checkpoint(out / "diverged.bin").step == 0


def test_minimize_and_stability(tmp_path, capsys):
    cfg = tmp_path / "m.yaml"
    cfg.write_text("grid: {resolution: 24}\ninitial_condition: {kind: tanh_ellipse, axes: [0.3, 0.22]}\n"
                   "minimize: {tol: 1.0e-6}\nstability: {sigmas: [0.0, 0.01], t_end: 0.002, dt: 1.0e-4}\n")
    out = tmp_path / "m"
    assert cli.main(["minimize", "--config", str(cfg), "--output", str(out)]) == 0
    assert "converged True" in capsys.readouterr().out
    rc = cli.main(["stability", "--config", str(cfg), "--output", str(out), "--resume", str(out / "phi_star.bin")])
    text = capsys.readouterr().out
    assert rc == 0, text
    assert (out / "stability" / "report.json").exists()


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "vesicleflow.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for sub in ("simulate", "minimize", "stability", "criteria", "report"):
        assert sub in res.stdout
