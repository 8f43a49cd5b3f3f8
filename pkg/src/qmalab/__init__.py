"""Numerical lab for the quaternionic Monge-Ampere equation on hyperkahler manifolds."""

from .errors import (
    ChartError,
    ConeExitError,
    NotAMetricForm,
    QMAError,
    StageFailure,
    StructureError,
    ValidationError,
)
from .fields import ScalarField, TorusGrid
from .solver import SolverConfig, SolverState, solve_qma

__version__ = "0.1.0"

__all__ = [
    "ChartError",
    "ConeExitError",
    "NotAMetricForm",
    "QMAError",
    "ScalarField",
    "SolverConfig",
    "SolverState",
    "StageFailure",
    "StructureError",
    "TorusGrid",
    "ValidationError",
    "solve_qma",
]
