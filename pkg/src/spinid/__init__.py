"""Identification of elongational viscosity parameters from fiber spinning.

The package simulates a one-dimensional stationary spinning line (velocity,
traction, temperature, strain rate) with a strain-rate dependent
elongational viscosity, and identifies the viscosity parameters (power-law
index n, log consistency kappa) from diameter measurements by trust-region
Gauss-Newton over BVP solves.
"""

__version__ = "0.1.0"

from .closure import AirProperties, stokes_resistance
from .continuation import ContinuationSettings, ContinuationTrace, adapter, \
    solve_with_fallback
from .data import (AnsatzFit, MeasurementSeries, d_fit, fit_ansatz,
                   load_measurements, save_measurements, synthesize)
from .errors import (ConfigError, ContinuationFailed, FitDiverged,
                     ModelDomainError, NewtonDiverged, SingularMatrixError,
                     SolverError, SpinidError)
from .ident import (HeuristicSettings, IdentificationProblem, IdentResult,
                    TrustRegionSettings, build_cases, identify, scan,
                    start_heuristic)
from .material import CarreauParams, MaterialConstants, mu_e, mu_e0, mu_s0
from .nondim import (DimensionlessGroups, ExperimentConfig, ReferenceValues,
                     compute_groups, derive_references, load_config)
from .spinmodel import FiberState, ModelSetup, build_setup, diameter

__all__ = [
    "__version__",
    "AirProperties", "stokes_resistance",
    "ContinuationSettings", "ContinuationTrace", "adapter",
    "solve_with_fallback",
    "AnsatzFit", "MeasurementSeries", "d_fit", "fit_ansatz",
    "load_measurements", "save_measurements", "synthesize",
    "ConfigError", "ContinuationFailed", "FitDiverged", "ModelDomainError",
    "NewtonDiverged", "SingularMatrixError", "SolverError", "SpinidError",
    "HeuristicSettings", "IdentificationProblem", "IdentResult",
    "TrustRegionSettings", "build_cases", "identify", "scan",
    "start_heuristic",
    "CarreauParams", "MaterialConstants", "mu_e", "mu_e0", "mu_s0",
    "DimensionlessGroups", "ExperimentConfig", "ReferenceValues",
    "compute_groups", "derive_references", "load_config",
    "FiberState", "ModelSetup", "build_setup", "diameter",
]
