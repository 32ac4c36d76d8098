"""Dynamic-diffusion finite elements for convection-diffusion-reaction problems on the unit square."""

from .analysis import (
    ErrorReport,
    RateTable,
    builtin_cases,
    compute_errors,
    convergence_rates,
    get_case,
    run_study,
)
from .assembly import ProblemSpec, assemble_B, assemble_dd_matrix, constant, constant_vector
from .dd import SolverConfig, SolveReport, compute_peclet, compute_xi, fixed_point_solve
from .mesh import Mesh, generate_uniform_mesh
from .spaces import DofMap, FieldCoefficients, quadrature_rule

__all__ = [
    "DofMap",
    "ErrorReport",
    "FieldCoefficients",
    "Mesh",
    "ProblemSpec",
    "RateTable",
    "SolveReport",
    "SolverConfig",
    "assemble_B",
    "assemble_dd_matrix",
    "builtin_cases",
    "compute_errors",
    "compute_peclet",
    "compute_xi",
    "constant",
    "constant_vector",
    "convergence_rates",
    "fixed_point_solve",
    "generate_uniform_mesh",
    "get_case",
    "quadrature_rule",
    "run_study",
]
