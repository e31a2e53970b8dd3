"""
Steklov Optimal Design Solver

Finite element solver and verification suite for volume-constrained optimal
design of Steklov eigenvalues of the g-Laplacian under Orlicz growth.
"""

__version__ = "1.0.0"
__author__ = "Steklov Design Team"

from .exceptions import (AdmissibilityError, ConfigurationError, ConvergenceError,
                         InvariantViolation, NotProjectableError, SteklovDesignError)
from .young import YoungFunction, make_young, make_custom_young, check_young_properties
from .mesh import Mesh, PolarGrid, PolarField, build_unit_square, build_unit_disk
from .modular import NodalField, DesignDensity
from .state import SolverOptions, EigenPair, solve_state, solve_hole_state
from .design import OptimalPair, alternate_optimize, bathtub_step, symmetrize_disk
from .limits import LimitPair, solve_limit, sweep_alpha, monotonicity_in_c, upper_bound_K

__all__ = [
    "SteklovDesignError",
    "ConfigurationError",
    "NotProjectableError",
    "AdmissibilityError",
    "ConvergenceError",
    "InvariantViolation",
    "YoungFunction",
    "make_young",
    "make_custom_young",
    "check_young_properties",
    "Mesh",
    "PolarGrid",
    "PolarField",
    "build_unit_square",
    "build_unit_disk",
    "NodalField",
    "DesignDensity",
    "SolverOptions",
    "EigenPair",
    "solve_state",
    "solve_hole_state",
    "OptimalPair",
    "alternate_optimize",
    "bathtub_step",
    "symmetrize_disk",
    "LimitPair",
    "solve_limit",
    "sweep_alpha",
    "monotonicity_in_c",
    "upper_bound_K",
]
