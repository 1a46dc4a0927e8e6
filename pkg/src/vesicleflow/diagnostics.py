"""Scalar monitors along a trajectory.

Covers the basic energy law residual, the higher-order functional
``A(t) = ||grad u||^2 + eta ||dE/dphi||^2``, Serrin-type and logarithmic
regularity-criterion integrals, H^2 distances, and Lojasiewicz exponent fits.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import energy as en
from . import spectral as sp

# exponents recorded for every snapshot; criterion integrals can use any of them
RECORDED_P = (2.0, 3.0, 4.0, 6.0, math.inf)


def _pkey(p: float) -> str:
    return "inf" if math.isinf(p) else f"{p:g}"


def norm_key(quantity: str, p: float) -> str:
    return f"{quantity}_L{_pkey(p)}"


@dataclass
class DiagnosticsRecord:
    t: float
    kinetic: float
    energy: en.EnergyBreakdown
    visc_dissipation: float
    phase_dissipation: float
    grad_u_l2: float
    var_deriv_l2: float
    higher_order: float
    mean_u: tuple
    criterion_integrands: dict = field(default_factory=dict)
    eta: float = 0.0
    k_bound: float = 0.0
    phi_h3: float = 0.0
    grad_phi_linf: float = 0.0
    div_u_l2: float = 0.0
    norms: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return self.kinetic + self.energy.total

    def flat(self) -> dict:
        """Flat ``name -> float`` view with a stable key order (used for CSV)."""
        out = {"t": self.t, "kinetic": self.kinetic}
        for k, v in asdict(self.energy).items():
            out[f"energy_{k}"] = v
        out["total"] = self.total
        for name in ("visc_dissipation", "phase_dissipation", "grad_u_l2", "var_deriv_l2",
                     "higher_order", "eta", "k_bound", "phi_h3", "grad_phi_linf", "div_u_l2"):
            out[name] = getattr(self, name)
        for j, m in enumerate(self.mean_u):
            out[f"mean_u{j}"] = m
        for q in ("grad_u", "u"):
            for p in RECORDED_P:
                key = norm_key(q, p)
                out[key] = self.norms.get(key, float("nan"))
        for k in sorted(self.criterion_integrands):
            out[f"crit_{k}"] = self.criterion_integrands[k]
        return out

    @classmethod
    def from_flat(cls, row: dict) -> "DiagnosticsRecord":
        g = lambda k: float(row[k])
        e = en.EnergyBreakdown(*(g(f"energy_{k}") for k in
                                 ("bending", "volume_penalty", "area_penalty", "total", "a_value", "b_value")))
        mean_u = tuple(g(k) for k in sorted(row) if k.startswith("mean_u"))
        norms = {k: g(k) for k in row if k.startswith(("grad_u_L", "u_L"))}
        crit = {k[5:]: g(k) for k in row if k.startswith("crit_")}
        return cls(g("t"), g("kinetic"), e, g("visc_dissipation"), g("phase_dissipation"), g("grad_u_l2"),
                   g("var_deriv_l2"), g("higher_order"), mean_u, crit, g("eta"), g("k_bound"),
                   g("phi_h3"), g("grad_phi_linf"), g("div_u_l2"), norms)


# higher-order functional ---------------------------------------------------


def default_eta(p: en.ModelParams, K: float) -> float:
    """``mu gamma / (16 k eps K^2)``."""
    if not K > 0:
        raise ValueError(f"K must be positive, got {K}")
    return p.mu * p.gamma / (16 * p.k * p.epsilon * K**2)


def phase_bound(grid: sp.Grid, phi: np.ndarray) -> float:
    """``||phi||_H3 + ||grad phi||_Linf``, the quantity bounded by K."""
    return sp.norm_h3(grid, phi) + sp.norm_lp(grid, sp.gradient(grid, phi), math.inf)


def higher_order_functional(grid: sp.Grid, state, p: en.ModelParams, eta: float) -> float:
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    gu = sp.norm_l2(grid, np.sqrt(np.sum(sp.vector_gradient(grid, state.u) ** 2, axis=(0, 1))))
    mu_ = sp.norm_l2(grid, en.variational_derivative(grid, state.phi, p))
    return gu**2 + eta * mu_**2


class Monitor:
    """Turns states into :class:`DiagnosticsRecord` s.

    Keeps the running maximum ``K`` of ``||phi||_H3 + ||grad phi||_Linf`` so
    that ``eta`` in the higher-order functional can be recomputed per record.
    """

    def __init__(self, grid: sp.Grid, p: en.ModelParams, criteria: Sequence["CriterionSpec"] = (),
                 eta: Optional[float] = None, dealias: bool = True):
        self.grid = grid
        self.p = p
        self.criteria = list(criteria)
        self.fixed_eta = eta
        self.dealias = dealias
        self.k_bound = 0.0
        self.history: list = []

    def record(self, state) -> DiagnosticsRecord:
        g, p = self.grid, self.p
        u, phi = state.u, state.phi
        grads = sp.vector_gradient(g, u)
        gu_mag = np.sqrt(np.sum(grads**2, axis=(0, 1)))
        u_mag = np.sqrt(np.sum(u**2, axis=0))
        norms = {}
        for q, mag in (("grad_u", gu_mag), ("u", u_mag)):
            for pp in RECORDED_P:
                norms[norm_key(q, pp)] = sp.norm_lp(g, mag, pp)
        grad_u_l2 = norms[norm_key("grad_u", 2)]
        mu_ = en.variational_derivative(g, phi, p, self.dealias)
        var_l2 = sp.norm_l2(g, mu_)
        phi_h3 = sp.norm_h3(g, phi)
        gphi_inf = sp.norm_lp(g, sp.gradient(g, phi), math.inf)
        self.k_bound = max(self.k_bound, phi_h3 + gphi_inf)
        eta = self.fixed_eta if self.fixed_eta is not None else default_eta(p, self.k_bound)
        kinetic = 0.5 * sp.norm_l2(g, u) ** 2
        rec = DiagnosticsRecord(
            t=float(state.t),
            kinetic=kinetic,
            energy=en.total_energy(g, phi, p, self.dealias),
            visc_dissipation=p.mu * grad_u_l2**2,
            phase_dissipation=p.gamma * var_l2**2,
            grad_u_l2=grad_u_l2,
            var_deriv_l2=var_l2,
            higher_order=grad_u_l2**2 + eta * var_l2**2,
            mean_u=tuple(float(np.mean(c)) for c in u),
            eta=eta,
            k_bound=self.k_bound,
            phi_h3=phi_h3,
            grad_phi_linf=gphi_inf,
            div_u_l2=sp.norm_l2(g, sp.divergence(g, u)),
            norms=norms,
        )
        rec.criterion_integrands = {c.id: c.integrand(rec) for c in self.criteria}
        self.history.append(rec)
        return rec

    __call__ = record


# energy law ----------------------------------------------------------------


def _uniform_dt(times: np.ndarray) -> float:
    steps = np.diff(times)
    dt = steps.mean()
    if np.any(np.abs(steps - dt) > 1e-9 * max(abs(dt), 1e-300)):
        raise ValueError("energy_law_residual needs records at uniform time spacing")
    return float(dt)


def energy_law_residual(history: Sequence[DiagnosticsRecord]) -> np.ndarray:
    """Central-difference residual of d/dt(kinetic + E) + mu||grad u||^2 + gamma||dE/dphi||^2."""
    if len(history) < 3:
        raise ValueError("energy_law_residual needs at least 3 records")
    times = np.array([r.t for r in history])
    dt = _uniform_dt(times)
    total = np.array([r.total for r in history])
    diss = np.array([r.visc_dissipation + r.phase_dissipation for r in history])
    return (total[2:] - total[:-2]) / (2 * dt) + diss[1:-1]


# regularity criteria -------------------------------------------------------

CRITERION_KINDS = ("serrin_gradient", "serrin_velocity", "log_gradient", "log_velocity")


class InvalidCriterion(ValueError):
    pass


@dataclass(frozen=True)
class CriterionSpec:
    kind: str
    p: float
    s: float

    def __post_init__(self):
        k, p, s = self.kind, self.p, self.s
        if k not in CRITERION_KINDS:
            raise InvalidCriterion(f"unknown criterion kind {k!r}; expected one of {CRITERION_KINDS}")
        if not s > 0:
            raise InvalidCriterion(f"s must be positive, got s={s}")
        lhs = 3.0 / p + 2.0 / s
        if k == "serrin_gradient":
            if not (1.5 < p <= math.inf):
                raise InvalidCriterion(f"serrin_gradient requires 3/2 < p <= inf, got p={p}")
            bound, name = 2.0, "3/p + 2/s <= 2"
        elif k == "log_gradient":
            if not (1.5 <= p <= 6):
                raise InvalidCriterion(f"log_gradient requires 3/2 <= p <= 6, got p={p}")
            bound, name = 2.0, "3/p + 2/s <= 2"
        else:
            if not (3 < p <= math.inf):
                raise InvalidCriterion(f"{k} requires 3 < p <= inf, got p={p}")
            bound, name = 1.0, "3/p + 2/s <= 1"
        if lhs > bound + 1e-12:
            raise InvalidCriterion(f"{k} violates {name}: 3/{p:g} + 2/{s:g} = {lhs:.6g}")

    @property
    def id(self) -> str:
        return f"{self.kind}_p{_pkey(self.p)}_s{self.s:g}"

    @property
    def quantity(self) -> str:
        return "grad_u" if self.kind.endswith("gradient") else "u"

    def integrand_from(self, norm: float, log_norm: float = 0.0) -> float:
        val = norm**self.s
        if self.kind.startswith("log"):
            val /= 1.0 + math.log(math.e + log_norm)
        return val

    def integrand(self, rec: DiagnosticsRecord) -> float:
        key = norm_key(self.quantity, self.p)
        if key not in rec.norms:
            raise KeyError(f"record has no {key}; recorded exponents are {RECORDED_P}")
        norm = rec.norms[key]
        if self.kind == "log_velocity":
            log_norm = rec.norms[norm_key("u", math.inf)]
        else:
            log_norm = norm
        return self.integrand_from(norm, log_norm)


def criterion_integral(history: Sequence[DiagnosticsRecord], spec: CriterionSpec) -> float:
    """Trapezoidal time integral of the criterion integrand over the history."""
    if len(history) < 2:
        return 0.0
    t = np.array([r.t for r in history])
    y = np.array([spec.integrand(r) for r in history])
    return float(np.trapezoid(y, t))


def criterion_integral_series(t: Sequence[float], norms: Sequence[float], spec: CriterionSpec,
                              log_norms: Optional[Sequence[float]] = None) -> float:
    """Same integral from raw norm samples (``log_norms`` only for ``log_velocity``)."""
    norms = np.asarray(norms, dtype=float)
    logs = norms if log_norms is None else np.asarray(log_norms, dtype=float)
    y = np.array([spec.integrand_from(a, b) for a, b in zip(norms, logs)])
    return float(np.trapezoid(y, np.asarray(t, dtype=float)))


# stability -----------------------------------------------------------------


def h2_distance(grid: sp.Grid, phi: np.ndarray, psi: np.ndarray) -> float:
    phi = grid.check_scalar(phi, "phi")
    psi = grid.check_scalar(psi, "psi")
    return sp.norm_h2(grid, phi - psi)


@dataclass
class LSFit:
    theta: float
    rate_exponent: float
    residual: float
    window: tuple
    n_points: int
    stderr: float
    faster_than_polynomial: bool
    note: str = ""

    def __iter__(self):
        yield self.theta
        yield self.rate_exponent


def theta_from_rate(rate: float) -> float:
    """Invert ``rate = theta / (1 - 2 theta)``."""
    return rate / (1.0 + 2.0 * rate)


def _loglog_slope(t, d):
    x = np.log1p(t)
    y = np.log(d)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    fit = A @ coef
    resid = float(np.sqrt(np.mean((y - fit) ** 2)))
    n = len(x)
    sxx = float(np.sum((x - x.mean()) ** 2))
    stderr = float(np.sqrt(np.sum((y - fit) ** 2) / max(n - 2, 1) / sxx)) if sxx > 0 else math.inf
    return -float(coef[0]), resid, stderr


def ls_exponent_fit(series: Sequence, e_infinity: float, floor: Optional[float] = None,
                    tail_fraction: float = 0.5) -> LSFit:
    """Fit ``E(t) - E_inf ~ (1 + t)^(-rate)`` over the tail and report ``theta = rate/(1+2 rate)``.

    ``series`` is a sequence of ``(t, E)`` pairs.  Samples below ``floor``
    (default ``1e3`` machine epsilons of ``E(0)``) are dropped before the tail
    window is taken; increases smaller than ``floor`` are tolerated.
    """
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 3:
        raise ValueError("series must be a sequence of at least three (t, E) pairs")
    t, e = arr[:, 0], arr[:, 1]
    if floor is None:
        floor = 1e3 * np.finfo(float).eps * abs(e[0])
    # increases below the floor are rounding, not dynamics
    if np.any(np.diff(e) > floor):
        raise ValueError("energy series must be monotone non-increasing")
    d = e - e_infinity
    if np.any(d < -floor) or d[0] <= floor:
        raise ValueError("energy series must stay above e_infinity")
    keep = d > floor
    reached = not keep.all()
    t, d = t[keep], d[keep]
    n = len(t)
    start = n - max(int(round(tail_fraction * n)), 3)
    if start < 0:
        raise ValueError("too few samples above the floor for a fit")
    tw, dw = t[start:], d[start:]
    rate, resid, stderr = _loglog_slope(tw, dw)
    # a polynomial law has the same slope on both halves of the window
    half = len(tw) // 2
    faster = False
    if half >= 3:
        r1 = _loglog_slope(tw[:half], dw[:half])[0]
        r2 = _loglog_slope(tw[half:], dw[half:])[0]
        faster = r2 > 1.2 * r1 and r1 > 0
    note = []
    if faster:
        note.append("faster than any polynomial")
    if reached:
        note.append("reached equilibrium")
    theta = theta_from_rate(rate) if rate > 0 else float("nan")
    return LSFit(theta, rate, resid, (float(tw[0]), float(tw[-1])), len(tw), stderr, faster, "; ".join(note))


def ls_inequality_fraction(residuals: Sequence[float], gaps: Sequence[float], theta: float) -> float:
    """Fraction of samples with ``||dE/dphi|| >= |E - E_inf|^(1 - theta)``."""
    r = np.asarray(residuals, dtype=float)
    g = np.abs(np.asarray(gaps, dtype=float))
    return float(np.mean(r >= g ** (1.0 - theta)))
