"""
Error taxonomy for the Steklov design solver.

The command-line driver maps each family to its own exit code:
configuration problems (1), solver non-convergence (2) and failed
structural checks (3).
"""

from typing import Any, Dict, Optional


class SteklovDesignError(Exception):
    """Base class for every error raised by the solver packages."""

    exit_code: int = 1

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.context = context or {}


class ConfigurationError(SteklovDesignError, ValueError):
    """Invalid parameters, out-of-range volumes or unreadable inputs."""


class NotProjectableError(SteklovDesignError, ValueError):
    """The field has zero trace modular, so no scaling reaches J = 1."""


class AdmissibilityError(SteklovDesignError, ValueError):
    """A field, density or direction lies outside its admissible class."""


class ConvergenceError(SteklovDesignError):
    """An inner or outer iteration stopped before its tolerance was met."""

    exit_code = 2


class InvariantViolation(SteklovDesignError):
    """A structural property check failed beyond its tolerance."""

    exit_code = 3
