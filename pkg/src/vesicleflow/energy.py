"""Penalised bending energy of a phase field and its first variation.

With ``dealias=True`` (the default) the cubic products and the double-well
integral are evaluated on the 3/2-padded grid, so for fields band-limited by
the 2/3 rule they are exact, and composite products are pushed through the
2/3 filter.  The discrete energy is then exactly translation invariant and
:func:`variational_derivative` is its exact gradient (for the quadrature
inner product) along every band-limited direction.  ``dealias=False`` uses
plain collocation products throughout.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .spectral import Grid, check_finite


@dataclass(frozen=True)
class ModelParams:
    epsilon: float = 0.05
    k: float = 1.0
    gamma: float = 0.01
    mu: float = 1.0
    m1: float = 100.0
    m2: float = 100.0
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        for name in ("epsilon", "k", "gamma", "mu"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v}")
        for name in ("m1", "m2"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be non-negative, got {v}")
        for name in ("alpha", "beta"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def with_targets(self, grid: Grid, phi0: np.ndarray) -> "ModelParams":
        """Set alpha and beta to A(phi0) and B(phi0)."""
        return self.replace(alpha=a_functional(grid, phi0), beta=b_functional(grid, phi0, self))

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class EnergyBreakdown:
    bending: float
    volume_penalty: float
    area_penalty: float
    total: float
    a_value: float
    b_value: float


def _phi_hat(grid: Grid, phi: np.ndarray) -> np.ndarray:
    phi = grid.check_scalar(phi, "phi")
    check_finite(phi, "phi")
    return grid.forward(phi)


def _f_hat(grid: Grid, phi: np.ndarray, phi_hat: np.ndarray, p: ModelParams, dealias: bool) -> np.ndarray:
    eps = p.epsilon
    if dealias:
        big = grid.pad(phi_hat)
        s = eps * grid.k2 * phi_hat + grid.unpad(big**3 - big) / eps
        return grid.dealias(s)
    return eps * grid.k2 * phi_hat + grid.forward(phi**3 - phi) / eps


def f_of_phi(grid: Grid, phi: np.ndarray, p: ModelParams, dealias: bool = True) -> np.ndarray:
    """``-eps Lap phi + (phi^2 - 1) phi / eps``."""
    return grid.inverse(_f_hat(grid, phi, _phi_hat(grid, phi), p, dealias))


def a_functional(grid: Grid, phi: np.ndarray) -> float:
    return float(np.sum(grid.check_scalar(phi, "phi")) * grid.cell_volume)


def b_functional(grid: Grid, phi: np.ndarray, p: ModelParams, dealias: bool = True) -> float:
    phi = grid.check_scalar(phi, "phi")
    s = grid.forward(phi)
    # ||grad phi||^2 by Parseval avoids three extra transforms
    grad2 = grid.spectral_mean_square(np.sqrt(grid.k2) * s) * grid.volume
    if dealias:
        big = grid.pad(s)
        well = grid.padded_integral((big**2 - 1) ** 2)
    else:
        well = np.sum((phi**2 - 1) ** 2) * grid.cell_volume
    return float(0.5 * p.epsilon * grad2 + well / (4 * p.epsilon))


def total_energy(grid: Grid, phi: np.ndarray, p: ModelParams, dealias: bool = True) -> EnergyBreakdown:
    f = f_of_phi(grid, phi, p, dealias)
    bending = p.k / (2 * p.epsilon) * float(np.sum(f**2)) * grid.cell_volume
    a = a_functional(grid, phi)
    b = b_functional(grid, phi, p, dealias)
    vol = 0.5 * p.m1 * (a - p.alpha) ** 2
    area = 0.5 * p.m2 * (b - p.beta) ** 2
    return EnergyBreakdown(bending, vol, area, bending + vol + area, a, b)


def energy(grid: Grid, phi: np.ndarray, p: ModelParams, dealias: bool = True) -> float:
    return total_energy(grid, phi, p, dealias).total


def variational_derivative_hat(grid: Grid, phi: np.ndarray, p: ModelParams, dealias: bool = True) -> np.ndarray:
    """Spectral coefficients of dE/dphi = k g(phi) + M1 (A - alpha) + M2 (B - beta) f(phi)."""
    eps = p.epsilon
    ph = _phi_hat(grid, phi)
    fh = _f_hat(grid, phi, ph, p, dealias)
    if dealias:
        big = grid.pad(ph)
        prod = grid.dealias(grid.unpad((3 * big**2 - 1) * grid.pad(fh)))
    else:
        prod = grid.forward((3 * phi**2 - 1) * grid.inverse(fh))
    gh = grid.k2 * fh + prod / eps**2
    out = p.k * gh + p.m2 * (b_functional(grid, phi, p, dealias) - p.beta) * fh
    out.flat[0] += p.m1 * (a_functional(grid, phi) - p.alpha)
    return out


def variational_derivative(grid: Grid, phi: np.ndarray, p: ModelParams, dealias: bool = True) -> np.ndarray:
    return grid.inverse(variational_derivative_hat(grid, phi, p, dealias))


def lower_order_part(grid: Grid, phi: np.ndarray, p: ModelParams, dealias: bool = True) -> np.ndarray:
    """H(phi) in the split dE/dphi = k eps Lap^2 phi + H(phi), from its expanded form.

    Independent of :func:`variational_derivative`; used to cross-check it.
    """
    phi = grid.check_scalar(phi, "phi")
    eps, k = p.epsilon, p.k
    ph = _phi_hat(grid, phi)
    to_phys = grid.pad if dealias else grid.inverse
    v = to_phys(ph)
    grad2 = sum(to_phys(1j * kj * ph) ** 2 for kj in grid.odd_wavenumbers)
    lap = to_phys(-grid.k2 * ph)
    h = (
        -6 * k / eps * v * grad2
        - 2 * k / eps * (3 * v**2 - 1) * lap
        + k / eps**3 * (3 * v**2 - 1) * (v**3 - v)
    )
    hh = grid.dealias(grid.unpad(h)) if dealias else grid.forward(h)
    hh = hh + p.m2 * (b_functional(grid, phi, p, dealias) - p.beta) * _f_hat(grid, phi, ph, p, dealias)
    hh.flat[0] += p.m1 * (a_functional(grid, phi) - p.alpha)
    return grid.inverse(hh)


def elastic_force_from(grid: Grid, mu_hat: np.ndarray, phi_hat: np.ndarray, dealias: bool = True) -> np.ndarray:
    """Spectral coefficients of ``(dE/dphi) grad phi`` given both factors in spectral form."""
    w = grid.inverse(mu_hat)
    out = []
    for kj in grid.odd_wavenumbers:
        c = grid.forward(w * grid.inverse(1j * kj * phi_hat))
        out.append(grid.dealias(c) if dealias else c)
    return np.stack(out)


def elastic_force(grid: Grid, phi: np.ndarray, p: ModelParams, dealias: bool = True) -> np.ndarray:
    mh = variational_derivative_hat(grid, phi, p, dealias)
    return grid.inverse_vec(elastic_force_from(grid, mh, grid.forward(phi), dealias))
