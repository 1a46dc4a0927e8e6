"""IMEX time stepping for the vesicle-fluid system and its pure gradient flow.

Implicit (diagonal in Fourier space): ``k gamma eps Lap^2`` in the phase
equation and ``mu Lap`` in the momentum equation.  Everything else is
explicit.  The pressure never appears: the explicit momentum right-hand side
is Leray-projected.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import energy as en
from .spectral import Grid, check_finite, leray_project_hat

logger = logging.getLogger(__name__)

BLOWUP_THRESHOLD = 1e8
SCHEMES = ("imex_euler", "imex_bdf2")


class SimulationDiverged(RuntimeError):
    """A step produced non-finite or runaway values.

    ``state`` is the last valid state; ``step`` is set by :func:`run`.
    """

    def __init__(self, t: float, state: "SimState", reason: str = "", step: Optional[int] = None):
        self.t = t
        self.state = state
        self.reason = reason
        self.step = step
        where = f" (step {step})" if step is not None else ""
        super().__init__(f"divergence detected at t={t:.6g}{where}: {reason}")


@dataclass(frozen=True)
class StepConfig:
    dt: float = 1e-4
    scheme: str = "imex_euler"
    dealias: bool = True
    # -1 flips the elastic force in the momentum equation (negative control only)
    force_sign: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")

    def replace(self, **changes) -> "StepConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class SimState:
    u: np.ndarray
    phi: np.ndarray
    t: float = 0.0
    step: int = 0
    # previous (u, phi) level, needed by imex_bdf2
    prev: Optional[tuple] = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def copy(self) -> "SimState":
        prev = None if self.prev is None else (self.prev[0].copy(), self.prev[1].copy())
        return SimState(self.u.copy(), self.phi.copy(), self.t, self.step, prev)


def zero_velocity(grid: Grid) -> np.ndarray:
    return np.zeros((grid.dim, *grid.shape))


def initial_state(grid: Grid, phi0: np.ndarray, u0: Optional[np.ndarray] = None, t0: float = 0.0) -> SimState:
    phi0 = grid.check_scalar(phi0, "phi0").copy()
    u0 = zero_velocity(grid) if u0 is None else grid.check_vector(u0, "u0").copy()
    check_finite(phi0, "phi0")
    check_finite(u0, "u0")
    return SimState(u0, phi0, float(t0))


# explicit right-hand sides ------------------------------------------------


def _explicit_terms(grid: Grid, u, phi, p: en.ModelParams, cfg: StepConfig, coupled: bool):
    """Explicit parts of the phase and momentum right-hand sides, in spectral form."""
    dealias = cfg.dealias
    ph = grid.forward(phi)
    mh = en.variational_derivative_hat(grid, phi, p, dealias)
    stiff = p.k * p.epsilon * grid.k4 * ph
    n_phi = -p.gamma * (mh - stiff)
    if not coupled:
        return n_phi, None
    uh = grid.forward_vec(u)
    grad_phi = [grid.inverse(1j * k * ph) for k in grid.odd_wavenumbers]
    transport = grid.forward(sum(uj * gj for uj, gj in zip(u, grad_phi)))
    if dealias:
        transport = grid.dealias(transport)
    n_phi = n_phi - transport

    conv = []
    for uhi in uh:
        c = grid.forward(sum(uj * grid.inverse(1j * k * uhi) for uj, k in zip(u, grid.odd_wavenumbers)))
        conv.append(grid.dealias(c) if dealias else c)
    w = grid.inverse(mh)
    force = []
    for g in grad_phi:
        c = grid.forward(w * g)
        force.append(grid.dealias(c) if dealias else c)
    n_u = leray_project_hat(grid, cfg.force_sign * np.stack(force) - np.stack(conv))
    return n_phi, n_u


def _terms(grid, state: SimState, p, cfg, coupled, which="terms"):
    key = (which, p, cfg.dealias, cfg.force_sign, coupled)
    if key not in state._cache:
        u, phi = (state.u, state.phi) if which == "terms" else state.prev
        state._cache[key] = _explicit_terms(grid, u, phi, p, cfg, coupled)
    return state._cache[key]


def _check(grid: Grid, old: SimState, u, phi, t):
    for name, a in (("phi", phi), ("u", u)):
        if not np.all(np.isfinite(a)):
            raise SimulationDiverged(t, old, f"non-finite {name}")
        m = float(np.max(np.abs(a)))
        if m > BLOWUP_THRESHOLD:
            raise SimulationDiverged(t, old, f"max|{name}| = {m:.3g} exceeds {BLOWUP_THRESHOLD:g}")


def _euler_update(grid, u, phi, terms, p, cfg, dt, coupled):
    n_phi, n_u = terms
    ph = grid.forward(phi)
    ph1 = (ph + dt * n_phi) / (1.0 + dt * p.gamma * p.k * p.epsilon * grid.k4)
    phi1 = grid.inverse(grid.enforce_hermitian(ph1))
    if not coupled:
        return u.copy(), phi1
    uh = grid.forward_vec(u)
    uh1 = leray_project_hat(grid, (uh + dt * n_u) / (1.0 + dt * p.mu * grid.k2))
    return grid.inverse_vec(grid.enforce_hermitian(uh1)), phi1


def _bdf2_update(grid, state: SimState, terms, prev_terms, p, cfg, coupled):
    dt = cfg.dt
    n_phi, n_u = terms
    m_phi, m_u = prev_terms
    ph = grid.forward(state.phi)
    ph0 = grid.forward(state.prev[1])
    ph1 = (4 * ph - ph0 + 2 * dt * (2 * n_phi - m_phi)) / (3.0 + 2 * dt * p.gamma * p.k * p.epsilon * grid.k4)
    phi1 = grid.inverse(grid.enforce_hermitian(ph1))
    if not coupled:
        return state.u.copy(), phi1
    uh = grid.forward_vec(state.u)
    uh0 = grid.forward_vec(state.prev[0])
    uh1 = (4 * uh - uh0 + 2 * dt * (2 * n_u - m_u)) / (3.0 + 2 * dt * p.mu * grid.k2)
    uh1 = leray_project_hat(grid, uh1)
    return grid.inverse_vec(grid.enforce_hermitian(uh1)), phi1


def _step(grid: Grid, state: SimState, p: en.ModelParams, cfg: StepConfig, coupled: bool) -> SimState:
    dt = cfg.dt
    terms = _terms(grid, state, p, cfg, coupled)
    if cfg.scheme == "imex_euler":
        u1, phi1 = _euler_update(grid, state.u, state.phi, terms, p, cfg, dt, coupled)
    elif state.prev is None:
        # bootstrap: Richardson-extrapolated Euler keeps the start-up error third order locally
        u_big, phi_big = _euler_update(grid, state.u, state.phi, terms, p, cfg, dt, coupled)
        u_h, phi_h = _euler_update(grid, state.u, state.phi, terms, p, cfg, dt / 2, coupled)
        mid = _explicit_terms(grid, u_h, phi_h, p, cfg, coupled)
        u_h, phi_h = _euler_update(grid, u_h, phi_h, mid, p, cfg, dt / 2, coupled)
        u1, phi1 = 2 * u_h - u_big, 2 * phi_h - phi_big
    else:
        prev_terms = _terms(grid, state, p, cfg, coupled, which="prev_terms")
        u1, phi1 = _bdf2_update(grid, state, terms, prev_terms, p, cfg, coupled)
    t1 = state.t + dt
    _check(grid, state, u1, phi1, t1)
    if cfg.scheme != "imex_bdf2":
        return SimState(u1, phi1, t1, state.step + 1)
    new = SimState(u1, phi1, t1, state.step + 1, (state.u, state.phi))
    new._cache[("prev_terms", p, cfg.dealias, cfg.force_sign, coupled)] = terms
    return new


def step_coupled(grid: Grid, state: SimState, p: en.ModelParams, cfg: StepConfig) -> SimState:
    """Advance velocity and phase field together by ``cfg.dt``."""
    return _step(grid, state, p, cfg, coupled=True)


def step_gradient_flow(grid: Grid, state: SimState, p: en.ModelParams, cfg: StepConfig) -> SimState:
    """Advance ``phi_t = -gamma dE/dphi`` by ``cfg.dt``; ``u`` is carried along unchanged."""
    return _step(grid, state, p, cfg, coupled=False)


def run(
    grid: Grid,
    s0: SimState,
    p: en.ModelParams,
    cfg: StepConfig,
    t_end: float,
    observer: Optional[Callable] = None,
    record_every: int = 10,
    coupled: bool = True,
    monitor=None,
) -> SimState:
    """Step from ``s0.t`` to ``t_end`` with a fixed ``dt``.

    ``observer`` receives a :class:`~vesicleflow.diagnostics.DiagnosticsRecord`
    at the start, every ``record_every`` steps and at the end.  Pass a
    :class:`~vesicleflow.diagnostics.Monitor` to control how records are made.
    """
    from .diagnostics import Monitor

    if not t_end > s0.t:
        raise ValueError(f"t_end={t_end} must exceed the start time {s0.t}")
    if record_every < 1:
        raise ValueError("record_every must be a positive integer")
    nsteps = int(round((t_end - s0.t) / cfg.dt))
    if monitor is None and observer is not None:
        monitor = Monitor(grid, p)
    stepper = step_coupled if coupled else step_gradient_flow
    state = s0
    if observer is not None:
        observer(monitor.record(state))
    for i in range(1, nsteps + 1):
        try:
            state = stepper(grid, state, p, cfg)
        except SimulationDiverged as exc:
            exc.step = i
            exc.args = (f"{exc.args[0]} (step {i})",)
            raise
        if observer is not None and (i % record_every == 0 or i == nsteps):
            observer(monitor.record(state))
    return state


# stationary states -------------------------------------------------------


@dataclass
class StationaryResult:
    phi: np.ndarray
    residual: float
    energy: float
    converged: bool
    steps: int
    energies: list
    residuals: list
    dts: list
    # accepted energy changes, from the trapezoid estimate once E differences hit rounding
    energy_changes: list = field(default_factory=list)

    def __iter__(self):
        # allows ``phi, info = stationary_solve(...)``
        yield self.phi
        yield self


def stationary_solve(
    grid: Grid,
    phi0: np.ndarray,
    p: en.ModelParams,
    tol: float = 1e-6,
    max_steps: int = 20000,
    dt0: float = 1e-3,
    dt_max: float = 1.0,
    grow: float = 1.25,
    stabilization: float = 0.3,
) -> StationaryResult:
    """Relax ``phi0`` along the gradient flow until ``||dE/dphi|| <= tol``.

    Steps that would raise the energy are rejected and retried with half the
    step; accepted steps enlarge ``dt`` by ``grow``.

    Besides ``k eps Lap^2`` the implicit operator carries ``stabilization``
    times the remaining part of the energy's Hessian at ``phi = +-1``,
    ``4k/eps |xi|^2 + 4k/eps^3``; the same operator is subtracted
    explicitly, so fixed points are unchanged.  ``stabilization=0`` gives the
    plain IMEX gradient flow.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    phi = grid.check_scalar(phi0, "phi0").copy()
    bulk = 4 * p.k / p.epsilon * grid.k2 + 4 * p.k / p.epsilon**3
    implicit = p.k * p.epsilon * grid.k4 + stabilization * bulk

    def evaluate(f):
        mh = en.variational_derivative_hat(grid, f, p)
        return mh, grid.spectral_mean_square(mh) ** 0.5 * grid.volume**0.5, en.energy(grid, f, p)

    roundoff = 1e3 * np.finfo(float).eps
    mh, res, e = evaluate(phi)
    energies, residuals, dts, changes = [e], [res], [], []
    dt = dt0
    steps = 0
    while res > tol and steps < max_steps:
        steps += 1
        ph = grid.forward(phi)
        rhs = ph - dt * p.gamma * (mh - implicit * ph)
        trial_hat = grid.enforce_hermitian(rhs / (1.0 + dt * p.gamma * implicit))
        trial = grid.inverse(trial_hat)
        if not np.all(np.isfinite(trial)):
            dt *= 0.5
            continue
        mh_t, res_t, e_t = evaluate(trial)
        change = e_t - e
        if abs(change) <= roundoff * abs(e):
            # energy difference is lost in rounding; the trapezoid rule on the
            # gradient gives it without cancellation
            change = grid.volume * float(np.real(np.sum(
                grid.rfft_weights * np.conj(0.5 * (mh + mh_t)) * (trial_hat - ph))))
        if change <= 0:
            phi, mh, res, e = trial, mh_t, res_t, e_t
            energies.append(e)
            residuals.append(res)
            dts.append(dt)
            changes.append(change)
            dt = min(dt * grow, dt_max)
        else:
            dt *= 0.5
            if dt < 1e-14:
                break
    converged = res <= tol
    if not converged:
        logger.warning("stationary_solve stopped after %d steps with residual %.3e", steps, res)
    return StationaryResult(phi, res, e, converged, steps, energies, residuals, dts, changes)
