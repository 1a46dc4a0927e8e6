"""Pseudo-spectral simulation and verification harness for a phase-field
vesicle immersed in an incompressible viscous fluid on a periodic box."""

from .diagnostics import (
    CriterionSpec,
    DiagnosticsRecord,
    InvalidCriterion,
    Monitor,
    criterion_integral,
    default_eta,
    energy_law_residual,
    h2_distance,
    higher_order_functional,
    ls_exponent_fit,
)
from .dynamics import (
    SimState,
    SimulationDiverged,
    StepConfig,
    initial_state,
    run,
    stationary_solve,
    step_coupled,
    step_gradient_flow,
)
from .energy import ModelParams, elastic_force, total_energy, variational_derivative
from .experiments import (
    ExperimentReport,
    exp_energy_law,
    exp_eventual_regularity,
    exp_large_viscosity,
    exp_ls_decay,
    exp_stability,
)
from .spectral import Grid, GridMismatchError, NonFiniteFieldError

__version__ = "0.1.0"
