"""Initial phase fields and velocity fields.

Every constructor returns fields already projected onto the 2/3-rule band,
so the dealiased discretisation starts from a band-limited state.
"""

from __future__ import annotations

import numpy as np

from .spectral import Grid, filter_field, leray_project_hat


def _distance(grid: Grid, center) -> np.ndarray:
    return np.sqrt(sum((x - c) ** 2 for x, c in zip(grid.coords, center)))


def tanh_disk(grid: Grid, epsilon: float, radius: float = 0.25, center=None, filtered: bool = True) -> np.ndarray:
    """``tanh((r0 - |x - x0|) / (sqrt(2) eps))``; a ball in 3D."""
    if center is None:
        center = [0.5 * L for L in grid.box_length]
    phi = np.tanh((radius - _distance(grid, center)) / (np.sqrt(2) * epsilon))
    return filter_field(grid, phi) if filtered else phi


def tanh_ellipse(grid: Grid, epsilon: float, axes=(0.3, 0.18), center=None, filtered: bool = True) -> np.ndarray:
    """Diffuse ellipse (ellipsoid in 3D) using the scaled radial distance as level function."""
    if center is None:
        center = [0.5 * L for L in grid.box_length]
    axes = tuple(axes) + (axes[-1],) * (grid.dim - len(axes))
    rho = np.sqrt(sum(((x - c) / a) ** 2 for x, c, a in zip(grid.coords, center, axes)))
    # signed distance approximated by scaling with the mean semi-axis
    d = (1.0 - rho) * float(np.mean(axes[: grid.dim]))
    phi = np.tanh(d / (np.sqrt(2) * epsilon))
    return filter_field(grid, phi) if filtered else phi


def constant(grid: Grid, c: float) -> np.ndarray:
    return np.full(grid.shape, float(c))


def band_limited_noise(grid: Grid, rng: np.random.Generator, band: int = 8) -> np.ndarray:
    """Zero-mean random field built from modes with ``|m_j| <= band``, unit max amplitude."""
    sel = np.ones(grid.spectral_shape, dtype=bool)
    for m in grid.mode_index:
        sel &= np.abs(m) <= band
    s = np.zeros(grid.spectral_shape, dtype=complex)
    n = int(sel.sum())
    s[sel] = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    s.flat[0] = 0.0
    f = grid.inverse(grid.dealias(grid.enforce_hermitian(s)))
    return f / np.abs(f).max()


def random_phase(grid: Grid, seed: int = 0, band: int = 8, amplitude: float = 0.5, offset: float = 0.0) -> np.ndarray:
    return offset + amplitude * band_limited_noise(grid, np.random.default_rng(seed), band)


def taylor_green(grid: Grid, amplitude: float = 1.0) -> np.ndarray:
    """Single-mode divergence-free vortex array (2D) or its standard 3D analogue."""
    x = [2 * np.pi * c / L for c, L in zip(grid.coords, grid.box_length)]
    if grid.dim == 2:
        u = np.stack([np.sin(x[0]) * np.cos(x[1]), -np.cos(x[0]) * np.sin(x[1])])
    else:
        u = np.stack([np.sin(x[0]) * np.cos(x[1]) * np.cos(x[2]),
                      -np.cos(x[0]) * np.sin(x[1]) * np.cos(x[2]),
                      np.zeros(grid.shape) + 0 * x[2]])
    return amplitude * np.broadcast_to(u, (grid.dim, *grid.shape)).copy()


def random_solenoidal(grid: Grid, seed: int = 0, amplitude: float = 1.0, band: int = 8) -> np.ndarray:
    """Zero-mean divergence-free random field with L2 norm ``amplitude``."""
    rng = np.random.default_rng(seed)
    comps = np.stack([band_limited_noise(grid, rng, band) for _ in range(grid.dim)])
    s = leray_project_hat(grid, grid.forward_vec(comps))
    s[(slice(None),) + (0,) * grid.dim] = 0.0
    u = grid.inverse_vec(grid.dealias(s))
    norm = np.sqrt(np.sum(u**2) * grid.cell_volume)
    return amplitude * u / norm if norm > 0 else u
