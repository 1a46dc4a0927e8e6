"""Fourier collocation on the periodic box.

Scalar fields are real arrays of shape ``grid.shape``; vector fields carry the
component index first, shape ``(grid.dim, *grid.shape)``.  Spectral
coefficients use the real-to-complex layout of :func:`numpy.fft.rfftn`
(last axis halved) and are normalised so that the zero mode equals the
spatial mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class GridMismatchError(ValueError):
    """Raised when a field does not live on the grid it is used with."""


class NonFiniteFieldError(ValueError):
    """Raised when a field contains NaN or Inf."""


def check_finite(a: np.ndarray, name: str = "field") -> None:
    if not np.all(np.isfinite(a)):
        bad = np.argwhere(~np.isfinite(a))[0]
        raise NonFiniteFieldError(f"{name} has a non-finite entry at index {tuple(int(i) for i in bad)}")


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform periodic grid on ``[0, L_1) x ... x [0, L_d)``.

    ``resolution`` and ``box_length`` accept a scalar (applied to every axis)
    or one value per axis.
    """

    dim: int = 2
    resolution: tuple = 128
    box_length: tuple = 1.0
    _key: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        res = self.resolution
        res = (int(res),) * self.dim if np.isscalar(res) else tuple(int(n) for n in res)
        box = self.box_length
        box = (float(box),) * self.dim if np.isscalar(box) else tuple(float(b) for b in box)
        if len(res) != self.dim or len(box) != self.dim:
            raise ValueError("resolution and box_length need one entry per axis")
        if min(res) < 8:
            raise ValueError(f"resolution must be >= 8 on every axis, got {res}")
        if min(box) <= 0:
            raise ValueError(f"box_length must be positive, got {box}")
        object.__setattr__(self, "resolution", res)
        object.__setattr__(self, "box_length", box)
        object.__setattr__(self, "_key", (self.dim, res, box))

    def __eq__(self, other):
        return isinstance(other, Grid) and self._key == other._key

    def __hash__(self):
        return hash(self._key)

    # geometry ------------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.resolution

    @property
    def npoints(self) -> int:
        return int(np.prod(self.resolution))

    @property
    def volume(self) -> float:
        return float(np.prod(self.box_length))

    @property
    def cell_volume(self) -> float:
        return self.volume / self.npoints

    @cached_property
    def coords(self) -> list:
        """Broadcastable coordinate arrays, one per axis."""
        out = []
        for j, (n, L) in enumerate(zip(self.resolution, self.box_length)):
            x = np.arange(n) * (L / n)
            sh = [1] * self.dim
            sh[j] = n
            out.append(x.reshape(sh))
        return out

    def mesh(self) -> list:
        return [np.broadcast_to(x, self.shape).copy() for x in self.coords]

    # wavenumbers ------------------------------------------------------------

    @cached_property
    def mode_index(self) -> list:
        """Integer mode numbers per axis in FFT order (last axis rfft-halved)."""
        out = []
        for j, n in enumerate(self.resolution):
            m = np.fft.rfftfreq(n, 1.0 / n) if j == self.dim - 1 else np.fft.fftfreq(n, 1.0 / n)
            sh = [1] * self.dim
            sh[j] = m.size
            out.append(np.rint(m).astype(int).reshape(sh))
        return out

    @cached_property
    def spectral_shape(self) -> tuple:
        return tuple(self.resolution[:-1]) + (self.resolution[-1] // 2 + 1,)

    @cached_property
    def wavenumbers(self) -> list:
        """Angular wavenumbers ``2 pi m / L`` per axis."""
        return [m * (2 * np.pi / L) for m, L in zip(self.mode_index, self.box_length)]

    @cached_property
    def odd_wavenumbers(self) -> list:
        # Nyquist mode has no conjugate partner, so odd derivatives drop it.
        out = []
        for k, m, n in zip(self.wavenumbers, self.mode_index, self.resolution):
            k = k.astype(float)
            if n % 2 == 0:
                k = np.where(np.abs(m) == n // 2, 0.0, k)
            out.append(k)
        return out

    @cached_property
    def k2(self) -> np.ndarray:
        return sum(np.broadcast_to(k**2, self.spectral_shape) for k in self.wavenumbers)

    @cached_property
    def k4(self) -> np.ndarray:
        return self.k2**2

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        keep = np.ones(self.spectral_shape, dtype=bool)
        for m, n in zip(self.mode_index, self.resolution):
            keep &= np.abs(m) <= n // 3
        return keep

    @cached_property
    def rfft_weights(self) -> np.ndarray:
        """Multiplicity of each stored coefficient in the full spectrum."""
        n = self.resolution[-1]
        w = np.full(n // 2 + 1, 2.0)
        w[0] = 1.0
        if n % 2 == 0:
            w[-1] = 1.0
        sh = [1] * (self.dim - 1) + [w.size]
        return np.broadcast_to(w.reshape(sh), self.spectral_shape)

    # validation ----------------------------------------------------------

    def check_scalar(self, f: np.ndarray, name: str = "field") -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise GridMismatchError(f"{name} has shape {f.shape}, grid expects {self.shape}")
        return f

    def check_vector(self, v: np.ndarray, name: str = "vector field") -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim, *self.shape):
            raise GridMismatchError(f"{name} has shape {v.shape}, grid expects {(self.dim, *self.shape)}")
        return v

    # transforms ------------------------------------------------------------

    def forward(self, f: np.ndarray) -> np.ndarray:
        f = self.check_scalar(f)
        check_finite(f)
        return np.fft.rfftn(f) / self.npoints

    def inverse(self, s: np.ndarray) -> np.ndarray:
        axes = tuple(range(s.ndim - self.dim, s.ndim))
        return np.fft.irfftn(s * self.npoints, s=self.shape, axes=axes)

    def forward_vec(self, v: np.ndarray) -> np.ndarray:
        v = self.check_vector(v)
        check_finite(v)
        axes = tuple(range(1, self.dim + 1))
        return np.fft.rfftn(v, axes=axes) / self.npoints

    def inverse_vec(self, s: np.ndarray) -> np.ndarray:
        axes = tuple(range(1, self.dim + 1))
        return np.fft.irfftn(s * self.npoints, s=self.shape, axes=axes)

    def enforce_hermitian(self, s: np.ndarray) -> np.ndarray:
        """Symmetrise the self-conjugate planes of an rfft coefficient array."""
        s = np.array(s, dtype=complex)
        n_last = self.resolution[-1]
        planes = [0] + ([n_last // 2] if n_last % 2 == 0 else [])
        lead = s.ndim - self.dim
        axes = tuple(range(lead, lead + self.dim - 1))
        for p in planes:
            sl = (Ellipsis, p)
            plane = s[sl]
            flipped = np.roll(np.flip(plane, axis=axes), shift=1, axis=axes)
            s[sl] = 0.5 * (plane + np.conj(flipped))
        return s

    def dealias(self, s: np.ndarray) -> np.ndarray:
        return s * self.dealias_mask

    # 3/2 zero padding ------------------------------------------------------

    @cached_property
    def padded_shape(self) -> tuple:
        """``ceil(3 N / 2)`` rounded up to even: products of up to four fields
        band-limited to ``|m| <= N/3`` are alias-free on this grid."""
        return tuple(-(-3 * n // 2) + (-(-3 * n // 2)) % 2 for n in self.resolution)

    @cached_property
    def _pad_index(self) -> tuple:
        src, dst = [], []
        for j, (n, m) in enumerate(zip(self.resolution, self.padded_shape)):
            h = (n - 1) // 2  # Nyquist is dropped
            if j == self.dim - 1:
                src.append(np.arange(h + 1))
                dst.append(np.arange(h + 1))
            else:
                src.append(np.concatenate([np.arange(h + 1), np.arange(n - h, n)]))
                dst.append(np.concatenate([np.arange(h + 1), np.arange(m - h, m)]))
        return np.ix_(*src), np.ix_(*dst)

    def pad(self, s: np.ndarray) -> np.ndarray:
        """Values on the padded grid of the trigonometric interpolant with coefficients ``s``."""
        shape = self.padded_shape
        big = np.zeros(shape[:-1] + (shape[-1] // 2 + 1,), dtype=complex)
        src, dst = self._pad_index
        big[dst] = s[src]
        return np.fft.irfftn(big * float(np.prod(shape)), s=shape, axes=tuple(range(self.dim)))

    def unpad(self, f_big: np.ndarray) -> np.ndarray:
        """Coefficients of a padded-grid field, truncated to this grid's modes."""
        shape = self.padded_shape
        big = np.fft.rfftn(f_big) / float(np.prod(shape))
        out = np.zeros(self.spectral_shape, dtype=complex)
        src, dst = self._pad_index
        out[src] = big[dst]
        return out

    def padded_integral(self, f_big: np.ndarray) -> float:
        return float(np.sum(f_big)) * self.volume / float(np.prod(self.padded_shape))

    def spectral_mean_square(self, s: np.ndarray) -> float:
        return float(np.sum(self.rfft_weights * np.abs(s) ** 2))


def forward_transform(grid: Grid, f: np.ndarray) -> np.ndarray:
    return grid.forward(f)


def inverse_transform(grid: Grid, s: np.ndarray) -> np.ndarray:
    return grid.inverse(s)


def dealias(grid: Grid, s: np.ndarray) -> np.ndarray:
    """Zero every mode with ``|m_j| > floor(N_j / 3)`` on any axis."""
    return grid.dealias(s)


def filter_field(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Physical-space 2/3-rule projection of a scalar field."""
    return grid.inverse(grid.dealias(grid.forward(f)))


# differential operators -------------------------------------------------


def gradient(grid: Grid, f: np.ndarray) -> np.ndarray:
    s = grid.forward(f)
    return np.stack([grid.inverse(1j * k * s) for k in grid.odd_wavenumbers])


def divergence(grid: Grid, v: np.ndarray) -> np.ndarray:
    s = grid.forward_vec(v)
    return grid.inverse(sum(1j * k * sj for k, sj in zip(grid.odd_wavenumbers, s)))


def laplacian(grid: Grid, f: np.ndarray) -> np.ndarray:
    return grid.inverse(-grid.k2 * grid.forward(f))


def bilaplacian(grid: Grid, f: np.ndarray) -> np.ndarray:
    return grid.inverse(grid.k4 * grid.forward(f))


def grad_laplacian(grid: Grid, f: np.ndarray) -> np.ndarray:
    s = -grid.k2 * grid.forward(f)
    return np.stack([grid.inverse(1j * k * s) for k in grid.odd_wavenumbers])


def vector_gradient(grid: Grid, v: np.ndarray) -> np.ndarray:
    """``out[i, j] = d v_i / d x_j``."""
    s = grid.forward_vec(v)
    return np.stack([np.stack([grid.inverse(1j * k * si) for k in grid.odd_wavenumbers]) for si in s])


def leray_project_hat(grid: Grid, s: np.ndarray) -> np.ndarray:
    """Project stacked spectral components onto divergence-free modes."""
    ks = grid.odd_wavenumbers
    kk = sum(np.broadcast_to(k**2, grid.spectral_shape) for k in ks)
    inv = np.zeros_like(kk)
    np.divide(1.0, kk, out=inv, where=kk > 0)
    kdot = sum(k * sj for k, sj in zip(ks, s))
    return np.stack([sj - k * kdot * inv for k, sj in zip(ks, s)])


def leray_project(grid: Grid, v: np.ndarray) -> np.ndarray:
    return grid.inverse_vec(leray_project_hat(grid, grid.forward_vec(v)))


# norms -------------------------------------------------------------------


def _magnitude(grid: Grid, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape == grid.shape:
        return np.abs(f)
    grid.check_vector(f)
    return np.sqrt(np.sum(f**2, axis=0))


def integral(grid: Grid, f: np.ndarray) -> float:
    return float(np.sum(grid.check_scalar(f)) * grid.cell_volume)


def mean(grid: Grid, f: np.ndarray) -> float:
    return float(np.mean(grid.check_scalar(f)))


def inner_product(grid: Grid, f: np.ndarray, g: np.ndarray) -> float:
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape:
        raise GridMismatchError(f"shapes {f.shape} and {g.shape} differ")
    _magnitude(grid, f)
    return float(np.sum(f * g) * grid.cell_volume)


def norm_l2(grid: Grid, f: np.ndarray) -> float:
    return float(np.sqrt(np.sum(_magnitude(grid, f) ** 2) * grid.cell_volume))


def norm_lp(grid: Grid, f: np.ndarray, p: float) -> float:
    """L^p norm by equal-weight quadrature; ``p = inf`` gives the max norm."""
    if not p >= 1:
        raise ValueError(f"L^p norm needs p >= 1, got {p}")
    a = _magnitude(grid, f)
    if np.isinf(p):
        return float(a.max())
    if p == 2:
        return norm_l2(grid, f)
    return float((np.sum(a**p) * grid.cell_volume) ** (1.0 / p))


def seminorm_h1(grid: Grid, f: np.ndarray) -> float:
    return norm_l2(grid, gradient(grid, f))


def norm_h2(grid: Grid, f: np.ndarray) -> float:
    """``||Lap f|| + |mean f|``, equivalent to the H^2 norm on the torus."""
    return norm_l2(grid, laplacian(grid, f)) + abs(mean(grid, f))


def norm_h3(grid: Grid, f: np.ndarray) -> float:
    return norm_l2(grid, grad_laplacian(grid, f)) + abs(mean(grid, f))
