"""
Planar Triangulations
Unit square and unit disk meshes, boundary extraction, quadrature rules and
the structured polar grid used for cap symmetrization
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from .exceptions import ConfigurationError

logger = logging.getLogger(__name__)

Predicate = Callable[[np.ndarray, np.ndarray], Union[np.ndarray, bool]]


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """
    Reference quadrature on cells and boundary edges.

    cell_points holds barycentric coordinates (one row per point) and
    edge_points holds the parameter along a segment; both weight vectors
    sum to one and are scaled by cell area / edge length at use.
    """
    cell_points: np.ndarray
    cell_weights: np.ndarray
    edge_points: np.ndarray
    edge_weights: np.ndarray

    @property
    def edge_basis(self) -> np.ndarray:
        """Values of the two endpoint hat functions at each edge point."""
        xi = self.edge_points
        return np.column_stack([1.0 - xi, xi])


_GAUSS_OFFSET = 0.5 / math.sqrt(3.0)

# Edge-midpoint rule on cells (exact for quadratics), two-point Gauss on edges
DEFAULT_QUADRATURE = QuadratureRule(
    cell_points=np.array([[0.5, 0.5, 0.0],
                          [0.0, 0.5, 0.5],
                          [0.5, 0.0, 0.5]]),
    cell_weights=np.full(3, 1.0 / 3.0),
    edge_points=np.array([0.5 - _GAUSS_OFFSET, 0.5 + _GAUSS_OFFSET]),
    edge_weights=np.array([0.5, 0.5]),
)


def _signed_areas(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    p0, p1, p2 = (vertices[cells[:, k]] for k in range(3))
    return 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
                  - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))


def _extract_boundary(cells: np.ndarray) -> np.ndarray:
    """Directed edges without a reverse twin, chained into loops."""
    directed = np.concatenate([cells[:, [0, 1]], cells[:, [1, 2]], cells[:, [2, 0]]])
    present = {(int(a), int(b)) for a, b in directed}
    boundary = [(a, b) for a, b in present if (b, a) not in present]

    successor = {a: b for a, b in boundary}
    ordered: List[Tuple[int, int]] = []
    remaining = set(successor)
    while remaining:
        start = min(remaining)
        current = start
        while True:
            nxt = successor[current]
            ordered.append((current, nxt))
            remaining.discard(current)
            current = nxt
            if current == start:
                break
    return np.array(ordered, dtype=np.int64).reshape(-1, 2)


class Mesh:
    """
    Conforming triangulation of a planar domain with P1 geometry.

    This class:
    - Stores vertices, counter-clockwise cells and outward boundary edges
    - Precomputes cell areas, edge lengths and hat-function gradients
    - Provides topology checks used by the mesh test-suite

    Arrays are read-only; a mesh can be shared between concurrent solves.
    """

    def __init__(self,
                 vertices: np.ndarray,
                 cells: np.ndarray,
                 boundary_edges: Optional[np.ndarray] = None,
                 domain: str = "custom",
                 levels: int = 0,
                 quadrature: QuadratureRule = DEFAULT_QUADRATURE):
        vertices = np.array(vertices, dtype=float)
        cells = np.array(cells, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise ConfigurationError("Vertices must be an (n, 2) array")
        if cells.ndim != 2 or cells.shape[1] != 3:
            raise ConfigurationError("Cells must be an (m, 3) array")
        if cells.min() < 0 or cells.max() >= len(vertices):
            raise ConfigurationError("Cell indices out of range")

        signed = _signed_areas(vertices, cells)
        flipped = signed < 0
        cells[flipped] = cells[flipped][:, [0, 2, 1]]
        areas = np.abs(signed)
        if np.any(areas <= 0):
            raise ConfigurationError(f"{int((areas <= 0).sum())} degenerate cells")

        if boundary_edges is None:
            boundary_edges = _extract_boundary(cells)
        boundary_edges = np.array(boundary_edges, dtype=np.int64).reshape(-1, 2)

        self.vertices = vertices
        self.cells = cells
        self.boundary_edges = boundary_edges
        self.cell_areas = areas
        segments = vertices[boundary_edges[:, 1]] - vertices[boundary_edges[:, 0]]
        self.edge_lengths = np.hypot(segments[:, 0], segments[:, 1])
        self.domain = domain
        self.levels = int(levels)
        self.quadrature = quadrature
        self.gradients = self._hat_gradients()
        self.barycenters = vertices[cells].mean(axis=1)

        for array in (self.vertices, self.cells, self.boundary_edges, self.cell_areas,
                      self.edge_lengths, self.gradients, self.barycenters):
            array.setflags(write=False)

        logger.debug(f"Mesh initialized: {self.n_vertices} vertices, {self.n_cells} cells, "
                     f"{self.n_boundary_edges} boundary edges ({domain})")

    def _hat_gradients(self) -> np.ndarray:
        """Gradients of the three barycentric hat functions per cell, shape (m, 3, 2)."""
        p = self.vertices[self.cells]
        double_area = 2.0 * self.cell_areas[:, None]
        grads = np.empty((self.n_cells, 3, 2))
        for a in range(3):
            b, c = (a + 1) % 3, (a + 2) % 3
            grads[:, a, 0] = (p[:, b, 1] - p[:, c, 1])
            grads[:, a, 1] = (p[:, c, 0] - p[:, b, 0])
        return grads / double_area[:, :, None]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_boundary_edges(self) -> int:
        return len(self.boundary_edges)

    @property
    def area(self) -> float:
        return float(self.cell_areas.sum())

    @property
    def boundary_length(self) -> float:
        return float(self.edge_lengths.sum())

    @property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    @property
    def mesh_size(self) -> float:
        edges = self.unique_edges()
        d = self.vertices[edges[:, 1]] - self.vertices[edges[:, 0]]
        return float(np.hypot(d[:, 0], d[:, 1]).max())

    @property
    def center(self) -> np.ndarray:
        return (self.barycenters * self.cell_areas[:, None]).sum(axis=0) / self.area

    def unique_edges(self) -> np.ndarray:
        pairs = np.concatenate([self.cells[:, [0, 1]], self.cells[:, [1, 2]], self.cells[:, [2, 0]]])
        return np.unique(np.sort(pairs, axis=1), axis=0)

    def euler_characteristic(self) -> int:
        """V - E + F with F counting triangles."""
        return self.n_vertices - len(self.unique_edges()) + self.n_cells

    def validate_topology(self) -> Dict[str, Any]:
        """
        Check edge multiplicities, closed boundary loops and outward orientation.

        Returns:
            Report dictionary with a "passed" flag
        """
        pairs = np.sort(np.concatenate([self.cells[:, [0, 1]], self.cells[:, [1, 2]],
                                        self.cells[:, [2, 0]]]), axis=1)
        edges, counts = np.unique(pairs, axis=0, return_counts=True)
        boundary_keys = {tuple(e) for e in np.sort(self.boundary_edges, axis=1)}
        multiplicity_ok = all(
            (count == 1) == (tuple(edge) in boundary_keys) and count <= 2
            for edge, count in zip(edges, counts)
        )

        heads, tails = self.boundary_edges[:, 0], self.boundary_edges[:, 1]
        loops_closed = sorted(heads.tolist()) == sorted(tails.tolist())

        segment = self.vertices[tails] - self.vertices[heads]
        normals = np.column_stack([segment[:, 1], -segment[:, 0]])
        midpoints = 0.5 * (self.vertices[tails] + self.vertices[heads])
        outward = np.einsum("ij,ij->i", normals, midpoints - self.center) > 0

        report = {
            "positive_orientation": bool(np.all(_signed_areas(self.vertices, self.cells) > 0)),
            "edge_multiplicity": bool(multiplicity_ok),
            "boundary_closed": bool(loops_closed),
            "outward_normals": bool(outward.all()),
            "euler_characteristic": self.euler_characteristic(),
        }
        report["passed"] = all(v for k, v in report.items() if k != "euler_characteristic")
        return report

    def __repr__(self) -> str:
        return (f"Mesh(domain={self.domain}, levels={self.levels}, vertices={self.n_vertices}, "
                f"cells={self.n_cells})")


def build_unit_square(n: int) -> Mesh:
    """
    Uniform n x n grid on [0, 1]^2, each square split along its diagonal.

    Args:
        n: squares per side (>= 1)

    Returns:
        Mesh with 2n^2 cells, (n+1)^2 vertices and 4n boundary edges
    """
    if n < 1:
        raise ConfigurationError(f"Square mesh requires n >= 1, got {n}")

    ticks = np.arange(n + 1) / n
    x, y = np.meshgrid(ticks, ticks)
    vertices = np.column_stack([x.ravel(), y.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    cells = np.empty((2 * n * n, 3), dtype=np.int64)
    cells[0::2] = np.column_stack([v00, v10, v11])
    cells[1::2] = np.column_stack([v00, v11, v01])

    mesh = Mesh(vertices, cells, domain="square", levels=n)
    logger.info(f"Built unit square mesh n={n}: {mesh.n_cells} cells")
    return mesh


def _ring_offset(ring: int) -> int:
    return 1 + 3 * ring * (ring - 1)


def build_unit_disk(k: int) -> Mesh:
    """
    Concentric-ring triangulation of the unit disk.

    Ring i (1 <= i <= k) has radius i/k and 6i equally spaced vertices
    starting at angle 0; consecutive rings are stitched by walking both
    rings in angular order. Level 1 is the hexagonal fan.
    """
    if k < 1:
        raise ConfigurationError(f"Disk mesh requires k >= 1, got {k}")

    vertices = [np.zeros((1, 2))]
    for ring in range(1, k + 1):
        count = 6 * ring
        theta = 2.0 * np.pi * np.arange(count) / count
        radius = ring / k
        vertices.append(np.column_stack([radius * np.cos(theta), radius * np.sin(theta)]))
    vertices = np.concatenate(vertices)

    cells: List[Tuple[int, int, int]] = []
    first = _ring_offset(1)
    for j in range(6):
        cells.append((0, first + j, first + (j + 1) % 6))

    for ring in range(2, k + 1):
        inner, outer = _ring_offset(ring - 1), _ring_offset(ring)
        m, M = 6 * (ring - 1), 6 * ring
        a = b = 0
        while a < m or b < M:
            # advance on the ring whose next vertex comes first in angle
            if b < M and (a == m or (b + 1) * m <= (a + 1) * M):
                cells.append((inner + a % m, outer + b % M, outer + (b + 1) % M))
                b += 1
            else:
                cells.append((inner + a % m, outer + b % M, inner + (a + 1) % m))
                a += 1

    mesh = Mesh(vertices, np.array(cells), domain="disk", levels=k)
    logger.info(f"Built unit disk mesh k={k}: {mesh.n_cells} cells, area={mesh.area:.6f}")
    return mesh


def locate_cells_by_predicate(mesh: Mesh, predicate: Predicate) -> np.ndarray:
    """
    Cells whose barycenter satisfies predicate(x, y).

    Returns:
        Sorted array of cell indices
    """
    x, y = mesh.barycenters[:, 0], mesh.barycenters[:, 1]
    mask = np.broadcast_to(np.asarray(predicate(x, y), dtype=bool), x.shape)
    return np.flatnonzero(mask)


def dump_mesh(mesh: Mesh, path: Union[str, Path]) -> Path:
    """Write the plain-text mesh format: header "nv nc nb", vertices, cells, boundary edges."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as handle:
        handle.write(f"{mesh.n_vertices} {mesh.n_cells} {mesh.n_boundary_edges}\n")
        np.savetxt(handle, mesh.vertices, fmt="%.17g")
        np.savetxt(handle, mesh.cells, fmt="%d")
        np.savetxt(handle, mesh.boundary_edges, fmt="%d")
    return path


def load_mesh(path: Union[str, Path], domain: str = "custom", levels: int = 0) -> Mesh:
    """Read a mesh written by dump_mesh."""
    lines = Path(path).read_text().splitlines()
    try:
        nv, nc, nb = (int(v) for v in lines[0].split())
    except (IndexError, ValueError) as exc:
        raise ConfigurationError(f"Malformed mesh header in {path}") from exc
    body = lines[1:]
    if len(body) < nv + nc + nb:
        raise ConfigurationError(f"Mesh file {path} is truncated")
    vertices = np.loadtxt(body[:nv], ndmin=2)
    cells = np.loadtxt(body[nv:nv + nc], dtype=np.int64, ndmin=2)
    boundary = np.loadtxt(body[nv + nc:nv + nc + nb], dtype=np.int64, ndmin=2)
    return Mesh(vertices, cells, boundary, domain=domain, levels=levels)


def evaluate_p1(mesh: Mesh, values: np.ndarray, points: np.ndarray, candidates: int = 12) -> np.ndarray:
    """
    Evaluate a P1 field at arbitrary points.

    Each point is located among the cells with the nearest barycenters.
    Points outside the triangulation (between a polygonal boundary and the
    true curve) take the value at the closest point of the best candidate cell.
    """
    values = np.asarray(getattr(values, "values", values), dtype=float)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    k = min(candidates, mesh.n_cells)
    _, nearest = cKDTree(mesh.barycenters).query(points, k=k)
    nearest = nearest.reshape(len(points), k)

    offsets = points[:, None, :] - mesh.barycenters[nearest]
    lam = 1.0 / 3.0 + np.einsum("pkad,pkd->pka", mesh.gradients[nearest], offsets)
    best = np.argmax(lam.min(axis=2), axis=1)
    rows = np.arange(len(points))
    chosen = lam[rows, best]
    chosen = np.clip(chosen, 0.0, None)
    chosen /= chosen.sum(axis=1, keepdims=True)
    cell_values = values[mesh.cells[nearest[rows, best]]]
    return np.einsum("pa,pa->p", chosen, cell_values)


class PolarGrid:
    """
    Structured rings x angles grid on the closed unit disk.

    Ring 0 is the centre; ring n_rings is the unit circle. Angles sit at
    cell centres of a uniform partition of (-pi, pi], so the set of angles is
    symmetric about 0 and no sample lies exactly on the axis.
    """

    def __init__(self, n_rings: int, n_angles: int):
        if n_rings < 1:
            raise ConfigurationError(f"Polar grid needs at least one ring, got {n_rings}")
        if n_angles < 4 or n_angles % 2:
            raise ConfigurationError(f"Polar grid needs an even angle count >= 4, got {n_angles}")
        self.n_rings = int(n_rings)
        self.n_angles = int(n_angles)
        self.dr = 1.0 / n_rings
        self.dtheta = 2.0 * np.pi / n_angles
        self.radii = np.linspace(0.0, 1.0, n_rings + 1)
        self.angles = -np.pi + (np.arange(n_angles) + 0.5) * self.dtheta
        # fill order of the decreasing rearrangement: |theta| ascending in index units, ties by index
        offset = np.abs(np.arange(n_angles) - (n_angles - 1) / 2.0)
        self.cap_order = np.lexsort((np.arange(n_angles), offset))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.n_rings + 1, self.n_angles

    @property
    def mesh_size(self) -> float:
        return max(self.dr, self.dtheta)

    def node_weights(self) -> np.ndarray:
        """Area quadrature weights: trapezoid in r (with the r Jacobian), midpoint in angle."""
        radial = self.radii * self.dr
        radial[-1] *= 0.5
        return np.repeat(radial[:, None], self.n_angles, axis=1) * self.dtheta

    def boundary_weights(self) -> np.ndarray:
        return np.full(self.n_angles, self.dtheta)

    def cartesian(self) -> Tuple[np.ndarray, np.ndarray]:
        r, theta = np.meshgrid(self.radii, self.angles, indexing="ij")
        return r * np.cos(theta), r * np.sin(theta)

    def gradient_magnitudes(self, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Piecewise gradient magnitude on the polar cells between consecutive rings and angles.

        Returns:
            (magnitudes, cell areas), both of shape (n_rings, n_angles)
        """
        u = np.asarray(values, dtype=float)
        u_next = np.roll(u, -1, axis=1)
        du_r = 0.5 * ((u[1:] - u[:-1]) + (u_next[1:] - u_next[:-1])) / self.dr
        du_t = 0.5 * ((u_next[:-1] - u[:-1]) + (u_next[1:] - u[1:])) / self.dtheta
        r_mid = 0.5 * (self.radii[1:] + self.radii[:-1])[:, None]
        magnitude = np.sqrt(du_r ** 2 + (du_t / r_mid) ** 2)
        areas = np.broadcast_to(r_mid * self.dr * self.dtheta, magnitude.shape)
        return magnitude, areas

    def field(self, values: np.ndarray) -> "PolarField":
        return PolarField(self, np.asarray(values, dtype=float))

    def from_function(self, f: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "PolarField":
        """Sample f(r, theta); the centre ring takes f(0, 0) at every angle."""
        r, theta = np.meshgrid(self.radii, self.angles, indexing="ij")
        values = np.array(np.broadcast_to(f(r, theta), r.shape), dtype=float)
        values[0, :] = float(np.asarray(f(np.zeros(1), np.zeros(1))).ravel()[0])
        return PolarField(self, values)

    def __repr__(self) -> str:
        return f"PolarGrid(rings={self.n_rings}, angles={self.n_angles})"


@dataclass(frozen=True, eq=False)
class PolarField:
    """Values on a PolarGrid, one row per ring (centre first)."""
    grid: PolarGrid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ConfigurationError(
                f"Polar field shape {self.values.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ConfigurationError("Polar field has non-finite entries")

    def to_frame(self) -> pd.DataFrame:
        rings, angles = np.meshgrid(np.arange(self.grid.n_rings + 1), self.grid.angles, indexing="ij")
        return pd.DataFrame({"ring": rings.ravel(), "angle": angles.ravel(), "value": self.values.ravel()})

    @classmethod
    def from_frame(cls, grid: PolarGrid, frame: pd.DataFrame) -> "PolarField":
        ordered = frame.sort_values(["ring", "angle"])
        return cls(grid, ordered["value"].to_numpy(dtype=float).reshape(grid.shape))


def sample_polar(mesh: Mesh, u: np.ndarray, grid: PolarGrid) -> PolarField:
    """Sample a P1 field on a disk mesh at the polar grid nodes."""
    if mesh.domain != "disk":
        raise ConfigurationError(f"Polar sampling needs a disk mesh, got domain={mesh.domain}")
    x, y = grid.cartesian()
    values = evaluate_p1(mesh, u, np.column_stack([x.ravel(), y.ravel()])).reshape(grid.shape)
    values[0, :] = values[0, 0]
    return PolarField(grid, values)
