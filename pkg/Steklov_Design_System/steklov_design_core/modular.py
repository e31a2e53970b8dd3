"""
Modulars and Weak-Form Residuals
Quadrature of bulk, gradient, trace and weighted modulars on the P1 space,
and assembly of their Frechet derivatives as nodal dual vectors
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import pandas as pd

from .exceptions import AdmissibilityError, ConfigurationError
from .mesh import Mesh
from .young import YoungFunction, luxemburg_norm

logger = logging.getLogger(__name__)

REGULARIZATION = 1e-10

FieldLike = Union["NodalField", np.ndarray]
DensityLike = Union["DesignDensity", np.ndarray, float]


@dataclass(frozen=True, eq=False)
class NodalField:
    """One real value per mesh vertex (a P1 function)."""
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ConfigurationError("Nodal field must be one-dimensional")
        if not np.all(np.isfinite(values)):
            raise ConfigurationError("Nodal field has non-finite entries")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, mesh: Mesh, f: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "NodalField":
        x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
        return cls(np.array(np.broadcast_to(f(x, y), x.shape), dtype=float))

    @classmethod
    def constant(cls, mesh: Mesh, value: float) -> "NodalField":
        return cls(np.full(mesh.n_vertices, float(value)))

    def check_mesh(self, mesh: Mesh) -> "NodalField":
        if len(self.values) != mesh.n_vertices:
            raise ConfigurationError(
                f"Nodal field has {len(self.values)} entries, mesh has {mesh.n_vertices} vertices"
            )
        return self

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"vertex_id": np.arange(len(self.values)), "value": self.values})

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "NodalField":
        return cls(frame.sort_values("vertex_id")["value"].to_numpy(dtype=float))

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True, eq=False)
class DesignDensity:
    """
    Cellwise density phi in [0, 1].

    The volume c = sum(phi * area) is implied by the values and the mesh.
    """
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ConfigurationError("Design density must be one-dimensional")
        if np.any(values < 0.0) or np.any(values > 1.0) or not np.all(np.isfinite(values)):
            raise AdmissibilityError("Design density must take values in [0, 1]")
        object.__setattr__(self, "values", values)

    @classmethod
    def uniform(cls, mesh: Mesh, c: float) -> "DesignDensity":
        if not 0.0 <= c <= mesh.area * (1.0 + 1e-12):
            raise ConfigurationError(f"Volume c={c} outside [0, {mesh.area}]")
        return cls(np.full(mesh.n_cells, min(c / mesh.area, 1.0)))

    @classmethod
    def indicator(cls, mesh: Mesh, cells: np.ndarray) -> "DesignDensity":
        values = np.zeros(mesh.n_cells)
        values[np.asarray(cells, dtype=np.int64)] = 1.0
        return cls(values)

    def volume(self, mesh: Mesh) -> float:
        return float(np.dot(self.values, mesh.cell_areas))

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.values > 0.0)

    def full_cells(self) -> np.ndarray:
        return np.flatnonzero(self.values >= 1.0)

    def fractional_cells(self) -> np.ndarray:
        return np.flatnonzero((self.values > 0.0) & (self.values < 1.0))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"cell_id": np.arange(len(self.values)), "value": self.values})

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "DesignDensity":
        return cls(frame.sort_values("cell_id")["value"].to_numpy(dtype=float))


def as_values(u: FieldLike) -> np.ndarray:
    return np.asarray(getattr(u, "values", u), dtype=float)


def density_values(mesh: Mesh, phi: DensityLike) -> np.ndarray:
    values = np.asarray(getattr(phi, "values", phi), dtype=float)
    return np.broadcast_to(values, (mesh.n_cells,))


def cell_quadrature_values(mesh: Mesh, u: FieldLike) -> np.ndarray:
    """Field values at the cell quadrature points, shape (cells, points)."""
    return as_values(u)[mesh.cells] @ mesh.quadrature.cell_points.T


def edge_quadrature_values(mesh: Mesh, u: FieldLike) -> np.ndarray:
    """Field values at the boundary-edge Gauss points, shape (edges, points)."""
    return as_values(u)[mesh.boundary_edges] @ mesh.quadrature.edge_basis.T


def cell_gradients(mesh: Mesh, u: FieldLike) -> np.ndarray:
    """Cellwise constant gradient of a P1 field, shape (cells, 2)."""
    return np.einsum("ca,cad->cd", as_values(u)[mesh.cells], mesh.gradients)


def cell_modular(Y: YoungFunction, mesh: Mesh, u: FieldLike) -> np.ndarray:
    """Per-cell quadrature of G(|u|) (already multiplied by the cell area)."""
    uq = cell_quadrature_values(mesh, u)
    return mesh.cell_areas * (Y(np.abs(uq)) @ mesh.quadrature.cell_weights)


def bulk_modular(Y: YoungFunction, mesh: Mesh, u: FieldLike) -> float:
    """Integral of G(|u|) over the domain."""
    return float(cell_modular(Y, mesh, u).sum())


def gradient_modular(Y: YoungFunction, mesh: Mesh, u: FieldLike) -> float:
    """Integral of G(|grad u|) over the domain."""
    grad = cell_gradients(mesh, u)
    return float(np.dot(Y(np.hypot(grad[:, 0], grad[:, 1])), mesh.cell_areas))


def trace_modular(Yb: YoungFunction, mesh: Mesh, u: FieldLike) -> float:
    """Integral of Yb(|u|) over the boundary."""
    uq = edge_quadrature_values(mesh, u)
    return float(np.dot(Yb(np.abs(uq)) @ mesh.quadrature.edge_weights, mesh.edge_lengths))


def weighted_modular(Y: YoungFunction, mesh: Mesh, phi: DensityLike, u: FieldLike) -> float:
    """Integral of phi * G(|u|)."""
    return float(np.dot(density_values(mesh, phi), cell_modular(Y, mesh, u)))


def energy(Y: YoungFunction, mesh: Mesh, alpha: float, phi: DensityLike, u: FieldLike) -> float:
    """
    I(u) = gradient modular + bulk modular + alpha * weighted modular.

    The bulk and weighted terms share one quadrature pass.
    """
    if alpha < 0:
        raise ConfigurationError(f"alpha must be nonnegative, got {alpha}")
    per_cell = cell_modular(Y, mesh, u)
    weights = 1.0 + alpha * density_values(mesh, phi)
    return gradient_modular(Y, mesh, u) + float(np.dot(weights, per_cell))


def _regularized_ratio(Y: YoungFunction, magnitude: np.ndarray, eps: float) -> np.ndarray:
    """g(m) / m with m capped below at eps."""
    m = np.maximum(magnitude, eps)
    return Y.density(m) / m


def energy_gradient(Y: YoungFunction,
                    mesh: Mesh,
                    alpha: float,
                    phi: DensityLike,
                    u: FieldLike,
                    eps: float = REGULARIZATION) -> np.ndarray:
    """
    Assembled dual vector of I'(u).

    Flux part: g(|grad u|) grad u / |grad u| . grad(hat_a) per cell.
    Reaction part: (1 + alpha phi) g(|u|) u / |u| hat_a at the cell quadrature points.
    Both ratios use the regularized magnitude max(|.|, eps).
    """
    values = as_values(u)
    rule = mesh.quadrature

    grad = cell_gradients(mesh, values)
    flux_factor = _regularized_ratio(Y, np.hypot(grad[:, 0], grad[:, 1]), eps) * mesh.cell_areas
    flux = flux_factor[:, None] * np.einsum("cd,cad->ca", grad, mesh.gradients)

    uq = cell_quadrature_values(mesh, values)
    weights = (1.0 + alpha * density_values(mesh, phi)) * mesh.cell_areas
    reaction_q = _regularized_ratio(Y, np.abs(uq), eps) * uq * rule.cell_weights * weights[:, None]
    reaction = reaction_q @ rule.cell_points

    return np.bincount(mesh.cells.ravel(), weights=(flux + reaction).ravel(),
                       minlength=mesh.n_vertices)


def trace_gradient(Yb: YoungFunction, mesh: Mesh, u: FieldLike, eps: float = REGULARIZATION) -> np.ndarray:
    """Assembled dual vector of J'(u): boundary integral of g(|u|) u / |u| hat_a."""
    values = as_values(u)
    rule = mesh.quadrature
    uq = edge_quadrature_values(mesh, values)
    reaction_q = (_regularized_ratio(Yb, np.abs(uq), eps) * uq * rule.edge_weights
                  * mesh.edge_lengths[:, None])
    contributions = reaction_q @ rule.edge_basis
    return np.bincount(mesh.boundary_edges.ravel(), weights=contributions.ravel(),
                       minlength=mesh.n_vertices)


def rayleigh_quotient(Y: YoungFunction,
                      Yb: YoungFunction,
                      mesh: Mesh,
                      alpha: float,
                      phi: DensityLike,
                      u: FieldLike) -> float:
    """I(u) / J(u); rejects fields with zero trace."""
    trace = trace_modular(Yb, mesh, u)
    if trace <= 0.0:
        raise AdmissibilityError("Rayleigh quotient undefined for a field with zero trace")
    return energy(Y, mesh, alpha, phi, u) / trace


def bulk_norm(Y: YoungFunction, mesh: Mesh, u: FieldLike) -> float:
    """Luxemburg norm of u in L^G."""
    return luxemburg_norm(lambda v: bulk_modular(Y, mesh, v), as_values(u), Y.p_minus, Y.p_plus)


def gradient_norm(Y: YoungFunction, mesh: Mesh, u: FieldLike) -> float:
    """Luxemburg norm of |grad u| in L^G."""
    return luxemburg_norm(lambda v: gradient_modular(Y, mesh, v), as_values(u), Y.p_minus, Y.p_plus)


def trace_norm(Yb: YoungFunction, mesh: Mesh, u: FieldLike) -> float:
    """Luxemburg norm of the trace of u in L^G on the boundary."""
    return luxemburg_norm(lambda v: trace_modular(Yb, mesh, v), as_values(u), Yb.p_minus, Yb.p_plus)


def sobolev_norm(Y: YoungFunction, mesh: Mesh, u: FieldLike) -> float:
    """W^{1,G} norm: ||u|| + ||grad u||."""
    return bulk_norm(Y, mesh, u) + gradient_norm(Y, mesh, u)


def sobolev_modular(Y: YoungFunction, mesh: Mesh, u: FieldLike) -> float:
    """Integral of G(|u|) + G(|grad u|)."""
    return bulk_modular(Y, mesh, u) + gradient_modular(Y, mesh, u)
