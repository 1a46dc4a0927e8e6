import math

import numpy as np
import pytest

from vesicleflow import energy as en
from vesicleflow import spectral as sp
from vesicleflow.energy import ModelParams
from vesicleflow.initial import band_limited_noise, random_phase, tanh_disk
from vesicleflow.spectral import Grid


def test_params_validation():
    with pytest.raises(ValueError, match="epsilon must be positive"):
        ModelParams(epsilon=-1)
    with pytest.raises(ValueError, match="m1"):
        ModelParams(m1=-0.1)
    with pytest.raises(ValueError):
        ModelParams(alpha=float("nan"))
    p = ModelParams().replace(mu=3.0)
    assert p.mu == 3.0 and p.as_dict()["mu"] == 3.0


def test_single_mode_energy_closed_form():
    # phi = a cos(2 pi n x): f has modes n and 3n only, so everything is exact
    g = Grid(2, 64)
    a, n = 0.7, 2
    k = 2 * np.pi * n
    x, _ = g.mesh()
    phi = a * np.cos(k * x)
    p = ModelParams(alpha=0.2, beta=0.3)
    eps = p.epsilon
    c1 = (eps * k**2 - 1 / eps) * a + 3 * a**3 / (4 * eps)
    c3 = a**3 / (4 * eps)
    bending = p.k / (2 * eps) * 0.5 * (c1**2 + c3**2)
    b = 0.5 * eps * a**2 * k**2 / 2 + (3 * a**4 / 8 - a**2 + 1) / (4 * eps)
    expected = bending + 0.5 * p.m1 * (0 - 0.2) ** 2 + 0.5 * p.m2 * (b - 0.3) ** 2
    br = en.total_energy(g, phi, p)
    assert br.a_value == pytest.approx(0.0, abs=1e-14)
    assert br.b_value == pytest.approx(b, rel=1e-13)
    assert br.bending == pytest.approx(bending, rel=1e-13)
    assert br.total == pytest.approx(expected, rel=1e-13)


def test_pure_phase_has_zero_energy_at_matching_targets():
    g = Grid(2, 32)
    phi = np.ones(g.shape)
    p = ModelParams(alpha=1.0, beta=0.0)
    assert en.energy(g, phi, p) == 0.0
    assert np.all(en.variational_derivative(g, phi, p) == 0.0)


def test_with_targets_zeroes_penalties(grid64, params):
    phi = tanh_disk(grid64, params.epsilon)
    p = params.with_targets(grid64, phi)
    br = en.total_energy(grid64, phi, p)
    assert br.volume_penalty == 0.0 and br.area_penalty == 0.0
    assert p.alpha == pytest.approx(sp.integral(grid64, phi))


@pytest.mark.parametrize("dealias", [True, False])
def test_gradient_matches_central_difference(grid64, dealias):
    p = ModelParams(alpha=0.1, beta=0.6)
    phi = random_phase(grid64, seed=2, band=5, amplitude=0.9)
    psi = band_limited_noise(grid64, np.random.default_rng(7), band=5)
    d = sp.inner_product(grid64, en.variational_derivative(grid64, phi, p, dealias), psi)
    errs = []
    for h in (1e-3, 5e-4):
        fd = (en.energy(grid64, phi + h * psi, p, dealias) - en.energy(grid64, phi - h * psi, p, dealias)) / (2 * h)
        errs.append(abs(fd - d))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.15)


def test_lower_order_split_agrees(grid64):
    p = ModelParams(alpha=-0.2, beta=0.9)
    phi = random_phase(grid64, seed=4, band=6, amplitude=1.1)
    full = en.variational_derivative(grid64, phi, p)
    split = p.k * p.epsilon * sp.bilaplacian(grid64, phi) + en.lower_order_part(grid64, phi, p)
    assert sp.norm_l2(grid64, full - split) <= 1e-10 * sp.norm_l2(grid64, full)


def test_f_of_phi_definition(grid32):
    p = ModelParams()
    phi = random_phase(grid32, seed=1, band=3, amplitude=0.5)
    f = en.f_of_phi(grid32, phi, p, dealias=False)
    ref = -p.epsilon * sp.laplacian(grid32, phi) + (phi**2 - 1) * phi / p.epsilon
    np.testing.assert_allclose(f, ref, atol=1e-10)


def test_elastic_force_has_zero_mean(grid64):
    p = ModelParams(alpha=0.3, beta=1.0)
    phi = tanh_disk(grid64, p.epsilon, center=(0.4, 0.55))
    force = en.elastic_force(grid64, phi, p)
    for comp in force:
        assert abs(comp.mean()) <= 1e-10 * sp.norm_l2(grid64, comp)


def test_energy_is_translation_invariant(grid64):
    p = ModelParams(alpha=0.1, beta=0.4)
    phi = random_phase(grid64, seed=9, band=6, amplitude=1.0)
    e0 = en.energy(grid64, phi, p)
    assert en.energy(grid64, np.roll(phi, (5, -3), axis=(0, 1)), p) == pytest.approx(e0, rel=1e-12)
    assert en.energy(grid64, phi[::-1, :].copy(), p) == pytest.approx(e0, rel=1e-12)


def test_three_dimensional_gradient_consistency():
    g = Grid(3, 16)
    p = ModelParams(alpha=0.0, beta=0.2)
    phi = random_phase(g, seed=3, band=3, amplitude=0.8)
    psi = band_limited_noise(g, np.random.default_rng(1), band=3)
    d = sp.inner_product(g, en.variational_derivative(g, phi, p), psi)
    h = 1e-4
    fd = (en.energy(g, phi + h * psi, p) - en.energy(g, phi - h * psi, p)) / (2 * h)
    assert fd == pytest.approx(d, rel=1e-6)
    assert math.isfinite(d)
