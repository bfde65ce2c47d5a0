"""Conic programs over zero, nonnegative and second-order cones, and their solver."""

from .builder import ConicBuilder
from .ipm import SolverSettings, solve
from .program import (
    ConeSpec,
    ConicProgram,
    ConicSolution,
    Residuals,
    Status,
    cone_violation,
    dual_cone_violation,
    dump_program,
    load_program,
    residuals,
    validate_program,
)

__all__ = [
    "ConeSpec",
    "ConicBuilder",
    "ConicProgram",
    "ConicSolution",
    "Residuals",
    "SolverSettings",
    "Status",
    "cone_violation",
    "dual_cone_violation",
    "dump_program",
    "load_program",
    "residuals",
    "solve",
    "validate_program",
]
