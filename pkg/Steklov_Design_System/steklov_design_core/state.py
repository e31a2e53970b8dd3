"""
Inner State Solver
Projected descent for Lambda(alpha, phi) = min { I(v) : J(v) = 1 }, the
constraint projection, Euler-Lagrange diagnostics and the hole problem
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field
from scipy import optimize, sparse
from scipy.sparse import csgraph

from .exceptions import ConfigurationError, NotProjectableError
from .mesh import Mesh
from .modular import (DensityLike, FieldLike, NodalField, as_values, density_values,
                      edge_quadrature_values, energy, energy_gradient, rayleigh_quotient,
                      trace_gradient, trace_modular)
from .young import YoungFunction, growth_bracket, inverse_G

logger = logging.getLogger(__name__)


class SolverOptions(BaseModel):
    """Numerical controls of the inner descent and the outer alternation."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    max_iterations: int = Field(20000, gt=0)
    gradient_tolerance: float = Field(5e-7, gt=0)
    armijo_slope: float = Field(1e-4, gt=0, lt=1)
    backtracking_ratio: float = Field(0.5, gt=0, lt=1)
    projection_tolerance: float = Field(1e-12, gt=0)
    regularization: float = Field(1e-10, gt=0)
    initial_step: float = Field(1.0, gt=0)
    min_step: float = Field(1e-14, gt=0)
    max_step: float = Field(1e6, gt=0)
    max_outer_iterations: int = Field(50, gt=0)
    outer_tolerance: float = Field(1e-10, gt=0)


@dataclass
class IterationRecord:
    iteration: int
    energy: float
    constraint: float
    residual: float
    step: float


@dataclass
class EigenPair:
    """
    Result of one inner solve.

    lam is I(u) at J(u) = 1; multiplier is the Steklov parameter
    <grad I, grad J> / <grad J, grad J>, which equals lam whenever I and J
    share the same homogeneity.
    """
    u: NodalField
    lam: float
    multiplier: float
    el_residual: float
    iterations: int
    converged: bool
    status: str
    history: List[IterationRecord] = field(default_factory=list)
    pinned: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def history_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "iter": [r.iteration for r in self.history],
            "I": [r.energy for r in self.history],
            "J": [r.constraint for r in self.history],
            "residual": [r.residual for r in self.history],
            "step": [r.step for r in self.history],
        })

    def summary(self) -> Dict[str, Any]:
        return {
            "lambda": self.lam,
            "multiplier": self.multiplier,
            "el_residual": self.el_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "status": self.status,
            "pinned_vertices": int(len(self.pinned)),
        }


class EnergyFunctional:
    """
    I, J and their assembled gradients for fixed (alpha, phi), restricted to
    the free degrees of freedom.
    """

    def __init__(self,
                 Y: YoungFunction,
                 Yb: YoungFunction,
                 mesh: Mesh,
                 alpha: float,
                 phi: DensityLike,
                 pinned: Optional[np.ndarray] = None,
                 eps: float = 1e-10):
        if alpha < 0:
            raise ConfigurationError(f"alpha must be nonnegative, got {alpha}")
        self.Y = Y
        self.Yb = Yb
        self.mesh = mesh
        self.alpha = float(alpha)
        self.phi = np.array(density_values(mesh, phi))
        self.eps = eps
        self.pinned = np.zeros(0, dtype=np.int64) if pinned is None else np.unique(pinned).astype(np.int64)
        self.free = np.ones(mesh.n_vertices, dtype=bool)
        self.free[self.pinned] = False

    def restrict(self, u: np.ndarray) -> np.ndarray:
        u = np.array(u, dtype=float)
        u[self.pinned] = 0.0
        return u

    def energy(self, u: np.ndarray) -> float:
        return energy(self.Y, self.mesh, self.alpha, self.phi, u)

    def constraint(self, u: np.ndarray) -> float:
        return trace_modular(self.Yb, self.mesh, u)

    def gradient(self, u: np.ndarray) -> np.ndarray:
        return self.restrict(energy_gradient(self.Y, self.mesh, self.alpha, self.phi, u, self.eps))

    def constraint_gradient(self, u: np.ndarray) -> np.ndarray:
        return self.restrict(trace_gradient(self.Yb, self.mesh, u, self.eps))


def initial_field(Yb: YoungFunction, mesh: Mesh) -> np.ndarray:
    """Constant field Yb^{-1}(1 / |boundary|), admissible up to quadrature."""
    return np.full(mesh.n_vertices, inverse_G(Yb, 1.0 / mesh.boundary_length))


def project_to_constraint(Yb: YoungFunction,
                          mesh: Mesh,
                          u: FieldLike,
                          tolerance: float = 1e-12) -> Tuple[float, np.ndarray]:
    """
    Scale u onto the constraint set J = 1.

    Args:
        Yb: boundary Young function
        mesh: triangulation
        u: field with nonzero trace
        tolerance: accuracy required on J(s u)

    Returns:
        (s, s * u) with s > 0
    """
    values = as_values(u)
    current = trace_modular(Yb, mesh, values)
    if not current > 0.0:
        raise NotProjectableError("Field has zero trace modular and cannot be projected onto J = 1")

    if Yb.is_power:
        s = current ** (-1.0 / Yb.params["p"])
        return s, s * values

    abs_uq = np.abs(edge_quadrature_values(mesh, values))
    weights = mesh.quadrature.edge_weights[None, :] * mesh.edge_lengths[:, None]

    def excess(s: float) -> float:
        return float(np.sum(weights * Yb(s * abs_uq))) - 1.0

    lo, hi = growth_bracket(1.0 / current, Yb.p_minus, Yb.p_plus)
    s = optimize.brentq(excess, lo, hi, xtol=1e-300, rtol=1e-15)
    if abs(excess(s)) > tolerance:
        logger.debug(f"Projection residual {excess(s):.3e} above {tolerance:.1e}")
    return s, s * values


def _line_search(functional: EnergyFunctional,
                 u: np.ndarray,
                 direction: np.ndarray,
                 current: float,
                 step: float,
                 opts: SolverOptions) -> Optional[Tuple[float, np.ndarray, float]]:
    """
    Backtracking Armijo search on t -> I(project(max(u - t d, 0))).

    Returns:
        (step, new field, new energy) or None when no step above min_step decreases I
    """
    slope = opts.armijo_slope * float(np.dot(direction, direction))
    while step >= opts.min_step:
        trial = functional.restrict(np.maximum(u - step * direction, 0.0))
        try:
            _, trial = project_to_constraint(functional.Yb, functional.mesh, trial,
                                             opts.projection_tolerance)
        except NotProjectableError:
            step *= opts.backtracking_ratio
            continue
        value = functional.energy(trial)
        if value <= current - slope * step:
            return step, trial, value
        step *= opts.backtracking_ratio
    return None


def reduced_direction(grad_I: np.ndarray,
                      grad_J: np.ndarray,
                      u: np.ndarray) -> Tuple[np.ndarray, float, np.ndarray]:
    """
    Tangential part of grad I with the active bound u >= 0 removed.

    A vertex is active when u <= 0 and the descent step -d would push it
    below zero. Active components are dropped from both gradients before the
    multiplier is formed; the set only grows, so the loop ends.

    Returns:
        (direction, multiplier, active mask)
    """
    active = np.zeros(len(u), dtype=bool)
    while True:
        g_I = np.where(active, 0.0, grad_I)
        g_J = np.where(active, 0.0, grad_J)
        gjj = float(np.dot(g_J, g_J))
        if gjj <= 0.0:
            raise NotProjectableError("Constraint gradient vanishes on the free degrees of freedom")
        multiplier = float(np.dot(g_I, g_J)) / gjj
        direction = g_I - multiplier * g_J
        blocked = active | ((u <= 0.0) & (direction > 0.0))
        if np.array_equal(blocked, active):
            return direction, multiplier, active
        active = blocked


def _tangential_direction(functional: EnergyFunctional, u: np.ndarray) -> Tuple[np.ndarray, float, float]:
    """Projected gradient, multiplier and relative KKT residual at u."""
    grad_J = functional.constraint_gradient(u)
    direction, multiplier, active = reduced_direction(functional.gradient(u), grad_J, u)
    scale = max(float(np.linalg.norm(np.where(active, 0.0, grad_J))), 1.0)
    residual = float(np.linalg.norm(direction)) / scale
    return direction, multiplier, residual


def solve_state(Y: YoungFunction,
                Yb: YoungFunction,
                mesh: Mesh,
                alpha: float,
                phi: DensityLike,
                opts: Optional[SolverOptions] = None,
                u0: Optional[FieldLike] = None,
                pinned: Optional[np.ndarray] = None) -> EigenPair:
    """
    Minimize I over {J = 1} by projected descent.

    Each iteration takes the gradient of I minus its component along grad J,
    with vertices held at the bound u = 0 removed (see reduced_direction),
    backtracks along the retraction t -> project(max(u - t d, 0)) until the Armijo
    condition holds, and starts every line search from the Barzilai-Borwein
    length of the previous step. Iteration stops on the Euler-Lagrange
    residual.

    Args:
        Y: bulk Young function
        Yb: boundary Young function
        mesh: triangulation
        alpha: weight of the density term (>= 0)
        phi: cellwise density
        opts: solver options
        u0: optional warm start
        pinned: vertices held at zero

    Returns:
        EigenPair; non-converged results are flagged, not raised
    """
    opts = opts or SolverOptions()
    functional = EnergyFunctional(Y, Yb, mesh, alpha, phi, pinned, opts.regularization)

    start = initial_field(Yb, mesh) if u0 is None else np.abs(as_values(u0))
    _, u = project_to_constraint(Yb, mesh, functional.restrict(start), opts.projection_tolerance)
    current = functional.energy(u)

    history: List[IterationRecord] = []
    previous: Optional[Tuple[np.ndarray, np.ndarray]] = None
    status = "max_iterations"
    step = 0.0
    multiplier = residual = float("nan")
    iteration = 0

    for iteration in range(opts.max_iterations + 1):
        direction, multiplier, residual = _tangential_direction(functional, u)
        history.append(IterationRecord(iteration, current, functional.constraint(u), residual, step))
        if residual <= opts.gradient_tolerance:
            status = "converged"
            break
        if iteration == opts.max_iterations:
            break

        trial_step = opts.initial_step
        if previous is not None:
            s_vec = u - previous[0]
            y_vec = direction - previous[1]
            sy = float(np.dot(s_vec, y_vec))
            if sy > 0.0:
                trial_step = float(np.clip(np.dot(s_vec, s_vec) / sy, opts.min_step, opts.max_step))

        accepted = _line_search(functional, u, direction, current, trial_step, opts)
        if accepted is None and previous is not None:
            accepted = _line_search(functional, u, direction, current, opts.initial_step, opts)
        if accepted is None:
            status = "stall"
            break

        previous = (u, direction)
        step, u, current = accepted
        logger.debug(f"iter {iteration}: I={current:.12g} residual={residual:.3e} step={step:.3e}")

    converged = status == "converged"
    pair = EigenPair(
        u=NodalField(u),
        lam=float(current),
        multiplier=float(multiplier),
        el_residual=float(residual),
        iterations=iteration,
        converged=converged,
        status=status,
        history=history,
        pinned=functional.pinned,
    )
    if converged:
        logger.info(f"State solve converged in {iteration} iterations: Lambda={current:.10g}, "
                    f"residual={residual:.3e}")
    else:
        logger.warning(f"State solve {status} after {iteration} iterations: Lambda={current:.10g}, "
                       f"residual={residual:.3e}")
    return pair


def pinned_vertices(mesh: Mesh, hole_cells: Sequence[int]) -> np.ndarray:
    """Vertex closure of a cell set."""
    cells = np.asarray(hole_cells, dtype=np.int64)
    if cells.size == 0:
        return np.zeros(0, dtype=np.int64)
    return np.unique(mesh.cells[cells])


def solve_hole_state(Y: YoungFunction,
                     Yb: YoungFunction,
                     mesh: Mesh,
                     hole_cells: Sequence[int],
                     opts: Optional[SolverOptions] = None,
                     u0: Optional[FieldLike] = None) -> EigenPair:
    """
    lambda(infinity, E): the alpha = 0 problem with every vertex of the hole cells pinned to 0.
    """
    pinned = pinned_vertices(mesh, hole_cells)
    if np.all(np.isin(mesh.boundary_vertices, pinned)):
        raise NotProjectableError("Hole closure contains every boundary vertex; no admissible field")
    return solve_state(Y, Yb, mesh, 0.0, 0.0, opts, u0=u0, pinned=pinned)


def solve_set_state(Y: YoungFunction,
                    Yb: YoungFunction,
                    mesh: Mesh,
                    alpha: float,
                    cells: Sequence[int],
                    opts: Optional[SolverOptions] = None,
                    u0: Optional[FieldLike] = None) -> EigenPair:
    """lambda(alpha, E) for the indicator of a cell set E."""
    phi = np.zeros(mesh.n_cells)
    phi[np.asarray(cells, dtype=np.int64)] = 1.0
    return solve_state(Y, Yb, mesh, alpha, phi, opts, u0=u0)


def el_residual_report(Y: YoungFunction,
                       Yb: YoungFunction,
                       mesh: Mesh,
                       alpha: float,
                       phi: DensityLike,
                       pair: Union[EigenPair, FieldLike],
                       pinned: Optional[np.ndarray] = None,
                       eps: float = 1e-10) -> Dict[str, Any]:
    """
    Euler-Lagrange diagnostics of a field.

    The residual grad I - mu grad J is reported both with the Steklov
    multiplier mu and with Lambda = I/J, together with the pairing gap
    |<I'(u), u> - Lambda <J'(u), u>| / |<J'(u), u>| and a per-node table.
    Vertices held at u = 0 with a nonnegative residual satisfy the bound
    constraint and are excluded.

    Returns:
        Report dictionary; fields with zero trace are reported as not admissible
    """
    if isinstance(pair, EigenPair):
        u = pair.u.values
        pinned = pair.pinned if pinned is None else pinned
    else:
        u = as_values(pair)

    if not trace_modular(Yb, mesh, u) > 0.0:
        logger.warning("Residual requested for a field outside the admissible class")
        return {"admissible": False, "reason": "zero trace: field is not in the admissible class"}

    functional = EnergyFunctional(Y, Yb, mesh, alpha, phi, pinned, eps)
    grad_I = functional.gradient(u)
    grad_J = functional.constraint_gradient(u)
    lam = rayleigh_quotient(Y, Yb, mesh, alpha, functional.phi, u)
    residual, multiplier, active = reduced_direction(grad_I, grad_J, u)
    lambda_residual = np.where(active, 0.0, grad_I - lam * grad_J)
    scale = max(float(np.linalg.norm(np.where(active, 0.0, grad_J))), 1.0)
    pairing = float(np.dot(grad_J, u))

    return {
        "admissible": True,
        "lambda": lam,
        "multiplier": multiplier,
        "active_vertices": int(active.sum()),
        "residual_norm": float(np.linalg.norm(residual)),
        "relative_residual": float(np.linalg.norm(residual)) / scale,
        "lambda_residual_norm": float(np.linalg.norm(lambda_residual)),
        "relative_lambda_residual": float(np.linalg.norm(lambda_residual)) / scale,
        "pairing_gap": abs(float(np.dot(grad_I, u)) - lam * pairing) / abs(pairing),
        "residual_vector": residual,
        "per_node": pd.DataFrame({
            "vertex_id": np.arange(mesh.n_vertices),
            "residual": residual,
            "lambda_residual": lambda_residual,
        }),
    }


def free_component_mask(mesh: Mesh, pinned: np.ndarray) -> np.ndarray:
    """Free vertices connected to a free boundary vertex through free edges."""
    free = np.ones(mesh.n_vertices, dtype=bool)
    free[np.asarray(pinned, dtype=np.int64)] = False
    edges = mesh.unique_edges()
    edges = edges[free[edges[:, 0]] & free[edges[:, 1]]]
    graph = sparse.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])),
                              shape=(mesh.n_vertices, mesh.n_vertices))
    _, labels = csgraph.connected_components(graph, directed=False)
    boundary = mesh.boundary_vertices[free[mesh.boundary_vertices]]
    return free & np.isin(labels, np.unique(labels[boundary]))


def positivity_report(mesh: Mesh, pair: EigenPair, threshold: float = 1e-8) -> Dict[str, Any]:
    """Minimum of u over the boundary-connected free vertices, relative to max u."""
    u = pair.u.values
    mask = free_component_mask(mesh, pair.pinned)
    peak = float(u.max())
    lowest = float(u[mask].min()) if mask.any() else 0.0
    return {
        "min_value": float(u.min()),
        "min_free_relative": lowest / peak if peak > 0 else 0.0,
        "nonnegative": bool(u.min() >= 0.0),
        "strictly_positive": bool(lowest > threshold * peak),
    }


def multi_start_check(Y: YoungFunction,
                      Yb: YoungFunction,
                      mesh: Mesh,
                      alpha: float,
                      phi: DensityLike,
                      opts: Optional[SolverOptions] = None,
                      n_starts: int = 3,
                      seed: int = 0,
                      n_jobs: int = 1) -> Dict[str, Any]:
    """
    Re-solve from random positive starts and compare the eigenvalues.

    Agreement is a reproducibility heuristic; uniqueness of the minimizer is
    not implied.
    """
    rng = np.random.default_rng(seed)
    starts = [rng.uniform(0.1, 1.0, mesh.n_vertices) for _ in range(n_starts)]
    reference = solve_state(Y, Yb, mesh, alpha, phi, opts)
    pairs = Parallel(n_jobs=n_jobs)(
        delayed(solve_state)(Y, Yb, mesh, alpha, phi, opts, start) for start in starts
    )
    values = np.array([p.lam for p in pairs])
    return {
        "reference": reference.lam,
        "starts": values.tolist(),
        "max_deviation": float(np.max(np.abs(values - reference.lam))),
        "all_converged": bool(reference.converged and all(p.converged for p in pairs)),
    }
