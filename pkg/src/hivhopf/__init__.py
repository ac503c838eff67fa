"""Simulation and Hopf-bifurcation analysis of a three-delay HIV/CTL model."""

from .model import (
    COMPONENTS,
    OmegaBounds,
    Parameters,
    State,
    StateDerivative,
    ValidationReport,
    omega_bounds,
    rhs,
    validate,
)
from .equilibria import (
    EquilibriumError,
    EquilibriumSet,
    ReproductionNumbers,
    equilibria,
    gamma,
    r0_closed_form,
    r0_spectral_oracle,
    residual,
)
from .dde_sim import SimConfig, Trajectory, classify, simulate
from .pipeline import ConfigError, load_config, run_report, run_scenario, scan_tau3, sweep

__version__ = "0.1.0"
