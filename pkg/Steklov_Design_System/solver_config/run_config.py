"""
Run Configuration Document
Pydantic models for the single JSON file that describes one experiment
"""

import json
import logging
import math
import os
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from steklov_design_core.exceptions import ConfigurationError, SteklovDesignError
from steklov_design_core.mesh import Mesh, PolarGrid, build_unit_disk, build_unit_square
from steklov_design_core.modular import DesignDensity
from steklov_design_core.state import SolverOptions
from steklov_design_core.young import YoungFunction, is_slower_growth, make_young

logger = logging.getLogger(__name__)


class YoungSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    family: Literal["power", "power_log", "power_sum"] = "power"
    params: Dict[str, float] = Field(default_factory=lambda: {"p": 2.0})

    @model_validator(mode="after")
    def check_buildable(self) -> "YoungSpec":
        try:
            make_young(self.family, self.params)
        except SteklovDesignError as exc:
            raise ValueError(str(exc)) from exc
        return self

    def build(self) -> YoungFunction:
        return make_young(self.family, self.params)


class DomainSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["square", "disk"] = "disk"
    level: int = Field(4, ge=1, le=256)

    @property
    def area(self) -> float:
        """Area of the triangulated domain (the inscribed polygon for the disk)."""
        if self.kind == "square":
            return 1.0
        sides = 6 * self.level
        return 0.5 * sides * math.sin(2.0 * math.pi / sides)

    def build(self) -> Mesh:
        return build_unit_square(self.level) if self.kind == "square" else build_unit_disk(self.level)


class RegionSpec(BaseModel):
    """Cell selection by barycenter: a disk, a half-plane or an axis-aligned box."""
    model_config = ConfigDict(extra="forbid")

    shape: Literal["disk", "half_plane", "box"] = "disk"
    center: Tuple[float, float] = (0.0, 0.0)
    radius: float = Field(0.5, gt=0)
    axis: Literal["x", "y"] = "x"
    offset: float = 0.0
    lower: Tuple[float, float] = (0.0, 0.0)
    upper: Tuple[float, float] = (0.5, 0.5)

    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.shape == "disk":
            return np.hypot(x - self.center[0], y - self.center[1]) < self.radius
        if self.shape == "half_plane":
            return (x if self.axis == "x" else y) > self.offset
        return (x >= self.lower[0]) & (x <= self.upper[0]) & (y >= self.lower[1]) & (y <= self.upper[1])


class DensitySpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["uniform", "indicator", "file"] = "uniform"
    region: Optional[RegionSpec] = None
    path: Optional[str] = None

    @model_validator(mode="after")
    def check_source(self) -> "DensitySpec":
        if self.kind == "indicator" and self.region is None:
            raise ValueError("indicator density needs a region")
        if self.kind == "file" and not self.path:
            raise ValueError("file density needs a path")
        return self


class AnnulusSpec(BaseModel):
    """Polar-grid set {inner <= r <= outer, angle_min <= theta <= angle_max}."""
    model_config = ConfigDict(extra="forbid")

    inner: float = Field(0.25, ge=0, le=1)
    outer: float = Field(0.75, ge=0, le=1)
    angle_min: float = 0.0
    angle_max: float = math.pi

    def mask(self, grid: PolarGrid) -> np.ndarray:
        r, theta = np.meshgrid(grid.radii, grid.angles, indexing="ij")
        return (r >= self.inner) & (r <= self.outer) & (theta >= self.angle_min) & (theta <= self.angle_max)


class SymmetrySpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    source: Literal["solution", "radial", "file"] = "solution"
    n_rings: Optional[int] = Field(None, ge=1)
    n_angles: Optional[int] = Field(None, ge=4)
    path: Optional[str] = None
    hole: Optional[AnnulusSpec] = Field(default_factory=AnnulusSpec)
    # weight of the rearranged hole in the weighted-modular comparison
    alpha: float = Field(1.0, gt=0)

    @model_validator(mode="after")
    def check_source(self) -> "SymmetrySpec":
        if self.source == "file" and not self.path:
            raise ValueError("file source needs a path")
        if self.n_angles is not None and self.n_angles % 2:
            raise ValueError("n_angles must be even")
        return self


class RunConfig(BaseModel):
    """One experiment: growth laws, domain, weight, volume and solver overrides."""
    model_config = ConfigDict(extra="forbid")

    young: YoungSpec = Field(default_factory=YoungSpec)
    boundary_young: Optional[YoungSpec] = None
    domain: DomainSpec = Field(default_factory=DomainSpec)
    alpha: Union[float, List[float]] = 0.0
    c: float = 0.0
    c_grid: Optional[List[float]] = None
    density: DensitySpec = Field(default_factory=DensitySpec)
    symmetry: SymmetrySpec = Field(default_factory=SymmetrySpec)
    solver: Dict[str, float] = Field(default_factory=dict)
    output_dir: Optional[str] = None
    seed: int = 0

    @field_validator("alpha")
    @classmethod
    def check_alpha(cls, value: Union[float, List[float]]) -> Union[float, List[float]]:
        values = value if isinstance(value, list) else [value]
        if not values or any(a < 0 or not math.isfinite(a) for a in values):
            raise ValueError(f"alpha must be finite and nonnegative, got {value}")
        return value

    @model_validator(mode="after")
    def check_consistency(self) -> "RunConfig":
        area = self.domain.area
        if not 0.0 <= self.c <= area * (1.0 + 1e-12):
            raise ValueError(f"c={self.c} outside [0, |domain| = {area:.12g}]")
        if self.c_grid is not None:
            if any(not 0.0 < c < area for c in self.c_grid) or np.any(np.diff(self.c_grid) <= 0):
                raise ValueError(f"c_grid must increase strictly inside (0, {area:.12g})")
        if self.boundary_young is not None and not is_slower_growth(self.boundary_young.build(),
                                                                    self.young.build()):
            raise ValueError("boundary Young function must grow more slowly than the bulk one")
        try:
            SolverOptions(**self.solver)
        except ValidationError as exc:
            raise ValueError(f"invalid solver overrides: {exc}") from exc
        if self.output_dir is not None:
            _check_creatable(Path(self.output_dir))
        return self

    @property
    def alphas(self) -> List[float]:
        return [float(a) for a in self.alpha] if isinstance(self.alpha, list) else [float(self.alpha)]

    @property
    def scalar_alpha(self) -> float:
        if len(self.alphas) != 1:
            raise ConfigurationError(f"This command needs a single alpha, got {self.alphas}")
        return self.alphas[0]

    def bulk(self) -> YoungFunction:
        return self.young.build()

    def boundary(self) -> YoungFunction:
        return (self.boundary_young or self.young).build()

    def solver_options(self, defaults: SolverOptions) -> SolverOptions:
        return SolverOptions(**{**defaults.model_dump(), **self.solver})

    def build_density(self, mesh: Mesh) -> DesignDensity:
        """phi for a fixed-density solve: uniform c/|domain|, region indicator, or CSV file."""
        if self.density.kind == "uniform":
            return DesignDensity.uniform(mesh, self.c)
        if self.density.kind == "indicator":
            region = self.density.region
            return DesignDensity(region.contains(mesh.barycenters[:, 0], mesh.barycenters[:, 1])
                                 .astype(float))
        try:
            frame = pd.read_csv(self.density.path)
        except (OSError, ValueError) as exc:
            raise ConfigurationError(f"Cannot read density file {self.density.path}: {exc}") from exc
        density = DesignDensity.from_frame(frame)
        if len(density.values) != mesh.n_cells:
            raise ConfigurationError(f"Density file has {len(density.values)} cells, mesh has {mesh.n_cells}")
        return density


def _check_creatable(path: Path) -> None:
    ancestor = path.resolve()
    while not ancestor.exists():
        ancestor = ancestor.parent
    if not ancestor.is_dir() or not os.access(ancestor, os.W_OK):
        raise ValueError(f"output directory {path} cannot be created under {ancestor}")


def load_run_config(path: Optional[Union[str, Path]]) -> RunConfig:
    """
    Parse a run document; no path means all defaults.

    Raises:
        ConfigurationError: on unreadable JSON or failed validation
    """
    if path is None:
        return RunConfig()
    try:
        document = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"Cannot read run config {path}: {exc}") from exc
    try:
        run = RunConfig.model_validate(document)
    except ValidationError as exc:
        logger.error(f"Invalid run config {path}: {exc}")
        raise ConfigurationError(f"Invalid run config {path}: {exc}") from exc
    logger.info(f"Loaded run config {path}: domain={run.domain.kind}({run.domain.level}), "
                f"alpha={run.alpha}, c={run.c}")
    return run
