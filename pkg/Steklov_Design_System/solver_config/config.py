"""
Solver Configuration for the Steklov Design System
Centralized numerical defaults, overridable through the environment or .env
"""

from typing import Any, Dict, List

from pydantic_settings import BaseSettings

from steklov_design_core.state import SolverOptions


class SolverConfig(BaseSettings):
    """Inner descent and outer alternation settings."""

    # Inner solve
    MAX_ITERATIONS: int = 20000
    GRADIENT_TOLERANCE: float = 5e-7
    ARMIJO_SLOPE: float = 1e-4
    BACKTRACKING_RATIO: float = 0.5
    PROJECTION_TOLERANCE: float = 1e-12
    REGULARIZATION: float = 1e-10

    # Step lengths
    INITIAL_STEP: float = 1.0
    MIN_STEP: float = 1e-14
    MAX_STEP: float = 1e6

    # Outer loop
    MAX_OUTER_ITERATIONS: int = 50
    OUTER_TOLERANCE: float = 1e-10

    class Config:
        env_file = ".env"
        env_prefix = "SOLVER_"
        extra = "ignore"

    def to_options(self) -> SolverOptions:
        return SolverOptions(
            max_iterations=self.MAX_ITERATIONS,
            gradient_tolerance=self.GRADIENT_TOLERANCE,
            armijo_slope=self.ARMIJO_SLOPE,
            backtracking_ratio=self.BACKTRACKING_RATIO,
            projection_tolerance=self.PROJECTION_TOLERANCE,
            regularization=self.REGULARIZATION,
            initial_step=self.INITIAL_STEP,
            min_step=self.MIN_STEP,
            max_step=self.MAX_STEP,
            max_outer_iterations=self.MAX_OUTER_ITERATIONS,
            outer_tolerance=self.OUTER_TOLERANCE,
        )


class YoungConfig(BaseSettings):
    """Young-function property suite."""

    GRID_MIN_DECADE: float = -6.0
    GRID_MAX_DECADE: float = 6.0
    POINTS_PER_DECADE: int = 200
    N_SAMPLES: int = 1000
    TOLERANCE: float = 1e-8
    SOBOLEV_DIMENSION: int = 2

    class Config:
        env_file = ".env"
        env_prefix = "YOUNG_"
        extra = "ignore"


class LimitConfig(BaseSettings):
    """Large-weight limit and volume monotonicity."""

    CONTINUATION_ALPHAS: List[float] = [1.0, 10.0, 100.0, 1000.0, 10000.0]
    SWEEP_ALPHAS: List[float] = [1.0, 10.0, 100.0, 1000.0, 10000.0]
    N_RANDOM_HOLES: int = 10
    SMALL_C_FRACTIONS: List[float] = [0.1, 0.01, 0.001]
    MONOTONICITY_MARGIN: float = 1e-6
    BOUND_TOLERANCE: float = 1e-6
    N_JOBS: int = 1

    class Config:
        env_file = ".env"
        env_prefix = "LIMIT_"
        extra = "ignore"


class SymmetryConfig(BaseSettings):
    """Polar grid used for cap symmetrization."""

    N_RINGS: int = 32
    N_ANGLES: int = 64
    TOLERANCE_FACTOR: float = 1.0
    N_DIRECTIONS: int = 20

    class Config:
        env_file = ".env"
        env_prefix = "SYMMETRY_"
        extra = "ignore"


class OutputConfig(BaseSettings):
    """Result files."""

    OUTPUT_DIR: str = "results"
    FLOAT_FORMAT: str = "%.17g"
    SUMMARY_FILE: str = "summary.json"

    class Config:
        env_file = ".env"
        env_prefix = "OUTPUT_"
        extra = "ignore"


class LoggingConfig(BaseSettings):
    """Logging configuration."""

    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    LOG_FILE: str = ""

    class Config:
        env_file = ".env"
        extra = "ignore"


# Main Configuration Class
class Config:
    """Main configuration class combining all settings."""

    def __init__(self):
        self.solver = SolverConfig()
        self.young = YoungConfig()
        self.limits = LimitConfig()
        self.symmetry = SymmetryConfig()
        self.output = OutputConfig()
        self.logging = LoggingConfig()

    def as_dict(self) -> Dict[str, Any]:
        """Every numeric default, grouped, for provenance in run summaries."""
        return {
            "solver": self.solver.model_dump(),
            "young": self.young.model_dump(),
            "limits": self.limits.model_dump(),
            "symmetry": self.symmetry.model_dump(),
        }


# Global configuration instance
config = Config()
