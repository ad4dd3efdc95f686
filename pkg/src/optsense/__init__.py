"""Sparse sensor-precision selection for ensemble and unscented Kalman filters."""

from optsense.enkf import MomentSet, posterior_cov_update
from optsense.models import AugmentedModel, SystemModel, build_augmented, selector
from optsense.precision import (
    PrecisionProblem,
    PrecisionSolution,
    SolverStatus,
    assemble_lmi,
    normalize_problem,
    prune_sensors,
    solve_precision,
    verify_bound,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentedModel",
    "MomentSet",
    "PrecisionProblem",
    "PrecisionSolution",
    "SolverStatus",
    "SystemModel",
    "assemble_lmi",
    "build_augmented",
    "normalize_problem",
    "posterior_cov_update",
    "prune_sensors",
    "selector",
    "solve_precision",
    "verify_bound",
]
