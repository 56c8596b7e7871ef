"""Second-order cone programs: builder, text I/O and interior-point solver."""

from laptime.conic.program import (
    Affine,
    Cone,
    ConeKind,
    ConicProgram,
    ProgramBuilder,
    ProgramError,
    dump,
    load,
    residuals,
)
from laptime.conic.solver import ConicSolution, SolverSettings, Status, solve

__all__ = [
    "Affine",
    "Cone",
    "ConeKind",
    "ConicProgram",
    "ConicSolution",
    "ProgramBuilder",
    "ProgramError",
    "SolverSettings",
    "Status",
    "dump",
    "load",
    "residuals",
    "solve",
]
