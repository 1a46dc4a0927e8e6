import warnings

import numpy as np
import pytest

from vesicleflow import persistence as ps
from vesicleflow.diagnostics import Monitor
from vesicleflow.dynamics import StepConfig, initial_state, run, step_coupled
from vesicleflow.energy import ModelParams
from vesicleflow.initial import random_solenoidal, tanh_disk
from vesicleflow.spectral import Grid


@pytest.fixture
def setup():
    g = Grid(2, (16, 20), (1.0, 1.25))
    p = ModelParams(alpha=0.1, beta=0.5)
    s = initial_state(g, tanh_disk(g, p.epsilon), random_solenoidal(g, seed=1, band=3), t0=0.125)
    s.step = 7
    return g, p, s


def test_checkpoint_is_bit_exact(tmp_path, setup):
    g, p, s = setup
    path = ps.save_checkpoint(s, tmp_path / "a.bin", g, p)
    back, header = ps.load_checkpoint(path, params=p, with_header=True)
    assert header.grid == g and header.t == 0.125 and header.step == 7 and not header.has_prev
    assert back.phi.tobytes() == s.phi.tobytes() and back.u.tobytes() == s.u.tobytes()
    assert back.prev is None
    assert not (tmp_path / "a.bin.tmp").exists()


def test_checkpoint_keeps_previous_level(tmp_path, setup):
    g, p, s = setup
    s = step_coupled(g, s, p, StepConfig(dt=1e-5, scheme="imex_bdf2"))
    back = ps.load_checkpoint(ps.save_checkpoint(s, tmp_path / "b.bin", g, p))
    assert back.prev is not None
    np.testing.assert_array_equal(back.prev[0], s.prev[0])
    np.testing.assert_array_equal(back.prev[1], s.prev[1])


def test_truncation_version_and_garbage(tmp_path, setup):
    g, p, s = setup
    data = ps.save_checkpoint(s, tmp_path / "c.bin", g, p).read_bytes()
    for cut in (4, 30, len(data) - 1):
        (tmp_path / "t.bin").write_bytes(data[:cut])
        with pytest.raises(ps.CheckpointTruncatedError):
            ps.load_checkpoint(tmp_path / "t.bin")
    (tmp_path / "v.bin").write_bytes(data[:8] + (99).to_bytes(4, "little") + data[12:])
    with pytest.raises(ps.CheckpointVersionError, match="99"):
        ps.load_checkpoint(tmp_path / "v.bin")
    (tmp_path / "m.bin").write_bytes(b"NOTACKPT" + data[8:])
    with pytest.raises(ps.CheckpointError, match="magic"):
        ps.load_checkpoint(tmp_path / "m.bin")
    (tmp_path / "x.bin").write_bytes(data + b"\0")
    with pytest.raises(ps.CheckpointError, match="trailing"):
        ps.load_checkpoint(tmp_path / "x.bin")


def test_parameter_hash_mismatch(tmp_path, setup):
    g, p, s = setup
    path = ps.save_checkpoint(s, tmp_path / "d.bin", g, p)
    other = p.replace(mu=p.mu * (1 + 1e-15))
    assert ps.params_hash(other) != ps.params_hash(p)
    with pytest.warns(ps.ParamsHashWarning):
        ps.load_checkpoint(path, params=other)
    with pytest.raises(ps.ParamsHashMismatch):
        ps.load_checkpoint(path, params=other, on_mismatch="fail")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ps.load_checkpoint(path, params=p)


@pytest.mark.parametrize("scheme", ["imex_euler", "imex_bdf2"])
def test_split_run_matches_continuous_run(tmp_path, setup, scheme):
    g, p, s = setup
    cfg = StepConfig(dt=2e-5, scheme=scheme)
    full = run(g, s, p, cfg, s.t + 40 * cfg.dt)
    half = run(g, s, p, cfg, s.t + 20 * cfg.dt)
    resumed = ps.load_checkpoint(ps.save_checkpoint(half, tmp_path / "h.bin", g, p), params=p)
    end = run(g, resumed, p, cfg, s.t + 40 * cfg.dt)
    assert np.max(np.abs(end.phi - full.phi)) <= 1e-12
    assert np.max(np.abs(end.u - full.u)) <= 1e-12


def test_diagnostics_csv_round_trip_is_exact(tmp_path, setup):
    g, p, s = setup
    mon = Monitor(g, p)
    path = tmp_path / "diag.csv"
    with ps.DiagnosticsWriter(path) as w:
        run(g, s, p, StepConfig(dt=1e-5), s.t + 5e-5, observer=w, record_every=2, monitor=mon)
    back = ps.read_diagnostics(path)
    assert back == mon.history
    with ps.DiagnosticsWriter(path, append=True) as w:
        w(mon.history[-1])
    assert len(ps.read_diagnostics(path)) == len(mon.history) + 1
    header, cols = ps.read_csv_columns(path)
    assert header[0] == "t" and cols["t"][0] == s.t


def test_csv_format_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,x\n1,2\n")
    with pytest.raises(ps.CSVFormatError, match="marker"):
        ps.read_csv_columns(bad)
    bad.write_text(f"{ps.CSV_MARKER} v9\nt\n1\n")
    with pytest.raises(ps.CSVFormatError, match="v9"):
        ps.read_csv_columns(bad)
