import math

import numpy as np
import pytest

from vesicleflow import dynamics as dyn
from vesicleflow import energy as en
from vesicleflow import spectral as sp
from vesicleflow.dynamics import SimulationDiverged, StepConfig, initial_state
from vesicleflow.energy import ModelParams
from vesicleflow.initial import random_solenoidal, tanh_disk, tanh_ellipse
from vesicleflow.spectral import Grid


def test_step_config_validation():
    with pytest.raises(ValueError, match="dt"):
        StepConfig(dt=0.0)
    with pytest.raises(ValueError, match="scheme"):
        StepConfig(scheme="rk4")


def test_pure_phase_at_rest_is_stationary(grid32):
    p = ModelParams(alpha=1.0, beta=0.0)
    s = initial_state(grid32, np.ones(grid32.shape))
    for scheme in dyn.SCHEMES:
        out = dyn.run(grid32, s, p, StepConfig(dt=1e-3, scheme=scheme), 0.01)
        assert np.all(out.phi == 1.0) and np.all(out.u == 0.0)


@pytest.mark.parametrize("scheme", dyn.SCHEMES)
def test_taylor_green_decays_at_discrete_rate(grid32, scheme):
    # phi = 1 gives no force and the convective term is a pure gradient
    p = ModelParams(alpha=1.0, beta=0.0, mu=0.7)
    x, y = grid32.mesh()
    k = 2 * np.pi
    u0 = np.stack([np.sin(k * x) * np.cos(k * y), -np.cos(k * x) * np.sin(k * y)])
    dt, n = 1e-3, 20
    out = dyn.run(grid32, initial_state(grid32, np.ones(grid32.shape), u0), p, StepConfig(dt=dt, scheme=scheme), n * dt)
    lam = 2 * k**2 * p.mu
    if scheme == "imex_euler":
        factor = (1 + dt * lam) ** -n
    else:
        # scalar oracle: Richardson start, then the two-level recurrence
        z = dt * lam
        a = [1.0, 2 / (1 + z / 2) ** 2 - 1 / (1 + z)]
        for _ in range(n - 1):
            a.append((4 * a[-1] - a[-2]) / (3 + 2 * z))
        factor = a[n]
    np.testing.assert_allclose(out.u, factor * u0, atol=1e-12)
    assert np.abs(out.u.mean(axis=(1, 2))).max() < 1e-15


def test_coupled_run_keeps_velocity_solenoidal_and_energy_decreasing(grid64):
    p = ModelParams(mu=1.0)
    phi0 = tanh_ellipse(grid64, p.epsilon, axes=(0.3, 0.18))
    p = p.with_targets(grid64, phi0)
    u0 = random_solenoidal(grid64, seed=1, amplitude=0.1, band=4)
    energies = []
    mon = dyn_monitor(grid64, p)
    out = dyn.run(grid64, initial_state(grid64, phi0, u0), p, StepConfig(dt=2e-5), 0.002,
                  observer=lambda r: energies.append(r.total), record_every=5, monitor=mon)
    assert sp.norm_l2(grid64, sp.divergence(grid64, out.u)) < 1e-9
    assert np.all(np.diff(energies) <= 1e-10 * abs(energies[0]))
    assert np.abs(out.u.mean(axis=(1, 2))).max() < 1e-12


def dyn_monitor(grid, p):
    from vesicleflow.diagnostics import Monitor
    return Monitor(grid, p)


def test_gradient_flow_lowers_energy_and_keeps_u(grid32):
    p = ModelParams()
    phi0 = tanh_disk(grid32, p.epsilon, radius=0.3)
    u0 = random_solenoidal(grid32, seed=2, amplitude=0.2, band=3)
    s = initial_state(grid32, phi0, u0)
    out = dyn.run(grid32, s, p, StepConfig(dt=1e-4), 0.005, coupled=False)
    assert en.energy(grid32, out.phi, p) < en.energy(grid32, phi0, p)
    np.testing.assert_array_equal(out.u, u0)


def test_divergence_reports_step(monkeypatch, grid32):
    monkeypatch.setattr(dyn, "BLOWUP_THRESHOLD", 0.5)
    p = ModelParams()
    phi0 = tanh_disk(grid32, p.epsilon)
    with pytest.raises(SimulationDiverged) as info:
        dyn.run(grid32, initial_state(grid32, phi0), p, StepConfig(dt=1e-4), 0.01)
    exc = info.value
    assert exc.step == 1 and "step 1" in str(exc)
    np.testing.assert_array_equal(exc.state.phi, phi0)


def test_non_finite_initial_field_rejected(grid32):
    phi = np.zeros(grid32.shape)
    phi[1, 2] = np.inf
    with pytest.raises(sp.NonFiniteFieldError):
        initial_state(grid32, phi)


def test_run_argument_errors(grid32):
    s = initial_state(grid32, np.ones(grid32.shape))
    with pytest.raises(ValueError, match="t_end"):
        dyn.run(grid32, s, ModelParams(), StepConfig(), 0.0)
    with pytest.raises(ValueError, match="record_every"):
        dyn.run(grid32, s, ModelParams(), StepConfig(), 1.0, record_every=0)


def test_observer_cadence(grid32):
    s = initial_state(grid32, np.ones(grid32.shape))
    times = []
    dyn.run(grid32, s, ModelParams(alpha=1.0, beta=0.0), StepConfig(dt=0.01), 0.25,
            observer=lambda r: times.append(r.t), record_every=10)
    np.testing.assert_allclose(times, [0.0, 0.1, 0.2, 0.25])


@pytest.mark.parametrize("scheme,order", [("imex_euler", 1), ("imex_bdf2", 2)])
def test_temporal_convergence_order(grid32, scheme, order):
    p = ModelParams(mu=1.0)
    phi0 = sp.filter_field(grid32, tanh_ellipse(grid32, p.epsilon, axes=(0.3, 0.2)))
    p = p.with_targets(grid32, phi0)
    u0 = random_solenoidal(grid32, seed=3, amplitude=0.1, band=3)
    s0 = initial_state(grid32, phi0, u0)
    t_end = 2e-3

    def final(dt):
        return dyn.run(grid32, s0, p, StepConfig(dt=dt, scheme=scheme), t_end).phi

    ref = final(2.5e-6)
    errs = [sp.norm_l2(grid32, final(dt) - ref) for dt in (4e-5, 2e-5)]
    assert math.log2(errs[0] / errs[1]) == pytest.approx(order, abs=0.25)


def test_stationary_solve_trivial_and_restart(grid32):
    p = ModelParams(alpha=1.0, beta=0.0)
    res = dyn.stationary_solve(grid32, np.ones(grid32.shape), p)
    assert res.converged and res.steps == 0 and res.residual == 0.0
    phi, info = res
    assert phi is res.phi and info is res
    with pytest.raises(ValueError):
        dyn.stationary_solve(grid32, np.ones(grid32.shape), p, tol=0.0)


def test_stationary_solve_converges_and_is_monotone(grid32):
    p = ModelParams()
    phi0 = tanh_ellipse(grid32, p.epsilon, axes=(0.3, 0.22))
    p = p.with_targets(grid32, phi0)
    res = dyn.stationary_solve(grid32, phi0, p, tol=1e-6)
    assert res.converged and res.residual <= 1e-6
    assert all(c <= 0 for c in res.energy_changes)
    again = dyn.stationary_solve(grid32, res.phi, p, tol=1e-6)
    assert again.steps == 0
