"""
Outer Design Optimization
Bathtub rearrangement, alternating minimization for Lambda(alpha, c),
derivative checks, level-set diagnostics and cap symmetrization on the disk
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .exceptions import AdmissibilityError, ConfigurationError, ConvergenceError
from .mesh import Mesh, PolarField, PolarGrid
from .modular import DesignDensity, FieldLike, NodalField, as_values, cell_modular, energy
from .state import EigenPair, SolverOptions, el_residual_report, solve_state
from .young import YoungFunction, inverse_G

logger = logging.getLogger(__name__)

DIRECTION_TOLERANCE = 1e-12


@dataclass
class OptimalPair:
    """
    (u, phi) returned by the alternating scheme.

    phi is the bathtub density of u, so it is an indicator up to one
    fractional cell, and lam = I(u) for that phi.
    """
    u: NodalField
    phi: DesignDensity
    lam: float
    threshold: float
    alpha: float
    c: float
    outer_history: List[float] = field(default_factory=list)
    converged: bool = True
    el_residual: float = float("nan")
    multiplier: float = float("nan")
    state: Optional[EigenPair] = None

    @property
    def outer_iterations(self) -> int:
        return max(len(self.outer_history) - 1, 0)

    def summary(self) -> Dict[str, Any]:
        return {
            "lambda": self.lam,
            "t": self.threshold,
            "c": self.c,
            "alpha": self.alpha,
            "outer_iters": self.outer_iterations,
            "converged": self.converged,
            "el_residual": self.el_residual,
            "multiplier": self.multiplier,
        }


@dataclass(frozen=True, eq=False)
class Direction:
    """Admissible perturbation of a density: zero mean, f <= 0 on {phi=1}, f >= 0 on {phi=0}."""
    values: np.ndarray

    @classmethod
    def for_density(cls, mesh: Mesh, phi: DesignDensity, values: np.ndarray,
                    tolerance: float = DIRECTION_TOLERANCE) -> "Direction":
        values = np.asarray(values, dtype=float)
        if values.shape != (mesh.n_cells,):
            raise AdmissibilityError(f"Direction needs {mesh.n_cells} cell values, got {values.shape}")
        mean = float(np.dot(values, mesh.cell_areas))
        if abs(mean) > tolerance:
            raise AdmissibilityError(f"Direction integral {mean:.3e} is not zero")
        phi_values = phi.values
        if np.any(values[phi_values >= 1.0] > tolerance):
            raise AdmissibilityError("Direction must be nonpositive where phi = 1")
        if np.any(values[phi_values <= 0.0] < -tolerance):
            raise AdmissibilityError("Direction must be nonnegative where phi = 0")
        return cls(values)


def _check_volume(mesh: Mesh, c: float) -> float:
    if c < 0 or c > mesh.area * (1.0 + 1e-12):
        raise ConfigurationError(f"Volume c={c} outside [0, |domain| = {mesh.area:.12g}]")
    return min(float(c), mesh.area)


def bathtub_order(keys: np.ndarray, preference: Optional[np.ndarray] = None) -> np.ndarray:
    """Cell indices by ascending key, then preference (lower first), then index."""
    keys = np.asarray(keys, dtype=float)
    index = np.arange(len(keys))
    if preference is None:
        return np.lexsort((index, keys))
    return np.lexsort((index, np.asarray(preference), keys))


def bathtub_fill(keys: np.ndarray,
                 areas: np.ndarray,
                 c: float,
                 preference: Optional[np.ndarray] = None) -> Tuple[np.ndarray, int]:
    """
    Fill cells in ascending key order until the volume reaches c.

    Ties are broken by `preference` (lower first) when given, then by cell
    index. The cell that would overshoot receives the fractional value that
    hits c exactly.

    Returns:
        (phi values, index of the last touched cell or -1 when c = 0)
    """
    keys = np.asarray(keys, dtype=float)
    areas = np.asarray(areas, dtype=float)
    order = bathtub_order(keys, preference)

    phi = np.zeros(len(keys))
    if c <= 0.0:
        return phi, -1

    cumulative = np.cumsum(areas[order])
    n_full = int(np.searchsorted(cumulative, c * (1.0 + 1e-14), side="right"))
    phi[order[:n_full]] = 1.0
    remainder = c - (cumulative[n_full - 1] if n_full else 0.0)
    if n_full < len(keys) and remainder > 1e-15 * max(c, 1.0):
        fractional = order[n_full]
        phi[fractional] = min(remainder / areas[fractional], 1.0)
        return phi, int(fractional)
    return phi, int(order[n_full - 1])


def cell_keys(Y: YoungFunction, mesh: Mesh, u: FieldLike) -> np.ndarray:
    """Cell comparison value: mean of G(|u|) over the cell."""
    return cell_modular(Y, mesh, u) / mesh.cell_areas


def bathtub_step(Y: YoungFunction, mesh: Mesh, u: FieldLike, c: float) -> Tuple[DesignDensity, float]:
    """
    Density in the class B minimizing the weighted modular of u.

    Returns:
        (phi, t) with t the level of the last touched cell in the scale of u,
        or -inf when c = 0
    """
    c = _check_volume(mesh, c)
    keys = cell_keys(Y, mesh, u)
    phi, last = bathtub_fill(keys, mesh.cell_areas, c)
    threshold = -math.inf if last < 0 else inverse_G(Y, float(keys[last]))
    return DesignDensity(phi), threshold


def sublevel_report(Y: YoungFunction, mesh: Mesh, u: FieldLike, phi: DesignDensity,
                    tolerance: float = 1e-12) -> Dict[str, Any]:
    """Keys on {phi = 1} must not exceed keys on {phi = 0}; at most one fractional cell."""
    keys = cell_keys(Y, mesh, u)
    full = keys[phi.values >= 1.0]
    empty = keys[phi.values <= 0.0]
    top = float(full.max()) if full.size else -math.inf
    bottom = float(empty.min()) if empty.size else math.inf
    n_fractional = int(len(phi.fractional_cells()))
    return {
        "max_key_inside": top,
        "min_key_outside": bottom,
        "fractional_cells": n_fractional,
        "passed": bool(top <= bottom + tolerance and n_fractional <= 1),
    }


def random_density(mesh: Mesh, c: float, rng: np.random.Generator) -> DesignDensity:
    """Random element of B: a mix of a random-order bathtub and the uniform density."""
    c = _check_volume(mesh, c)
    extreme, _ = bathtub_fill(rng.random(mesh.n_cells), mesh.cell_areas, c)
    weight = rng.random()
    uniform = np.full(mesh.n_cells, c / mesh.area)
    return DesignDensity(np.clip(weight * extreme + (1.0 - weight) * uniform, 0.0, 1.0))


def bathtub_optimality(Y: YoungFunction,
                       mesh: Mesh,
                       u: FieldLike,
                       phi: DesignDensity,
                       n_trials: int = 100,
                       rng: Optional[np.random.Generator] = None,
                       tolerance: float = 1e-12) -> Dict[str, Any]:
    """Compare the weighted modular at phi against random competitors of the same volume."""
    rng = rng or np.random.default_rng(0)
    per_cell = cell_modular(Y, mesh, u)
    c = phi.volume(mesh)
    value = float(np.dot(phi.values, per_cell))
    competitors = np.array([np.dot(random_density(mesh, c, rng).values, per_cell) for _ in range(n_trials)])
    return {
        "value": value,
        "best_competitor": float(competitors.min()) if n_trials else math.inf,
        "passed": bool(np.all(value <= competitors + tolerance)),
    }


def require_converged(pair: EigenPair, context: str) -> None:
    if not pair.converged:
        message = (f"State solve {pair.status} at {context}: residual {pair.el_residual:.3e} "
                   f"after {pair.iterations} iterations")
        logger.error(message)
        raise ConvergenceError(message, context={"status": pair.status, "residual": pair.el_residual,
                                                 "where": context})


def alternate_optimize(Y: YoungFunction,
                       Yb: YoungFunction,
                       mesh: Mesh,
                       alpha: float,
                       c: float,
                       opts: Optional[SolverOptions] = None,
                       u0: Optional[FieldLike] = None,
                       phi0: Optional[DesignDensity] = None) -> OptimalPair:
    """
    Alternating block minimization for Lambda(alpha, c).

    Starting from the bathtub density of the alpha = 0 minimizer (or from
    phi0), each round solves the state problem for the current density and
    replaces the density by the bathtub step of the new state. Iteration
    stops once the support is stable, the density no longer moves and the
    eigenvalue change is below the outer tolerance.

    Args:
        Y, Yb: bulk and boundary Young functions
        mesh: triangulation
        alpha: weight (>= 0)
        c: volume in [0, |domain|]
        opts: solver options
        u0, phi0: optional warm start

    Returns:
        OptimalPair for the final state and its bathtub density

    Raises:
        ConvergenceError: when an inner solve does not converge
    """
    opts = opts or SolverOptions()
    c = _check_volume(mesh, c)

    if phi0 is None:
        if c <= 0.0 or c >= mesh.area:
            phi = DesignDensity(np.full(mesh.n_cells, 0.0 if c <= 0.0 else 1.0))
            u = u0
        else:
            base = solve_state(Y, Yb, mesh, 0.0, 0.0, opts, u0)
            require_converged(base, "initial alpha=0 solve")
            phi, _ = bathtub_step(Y, mesh, base.u, c)
            u = base.u
    else:
        phi, u = phi0, u0

    history: List[float] = []
    converged = False
    pair: Optional[EigenPair] = None
    new_phi, threshold = phi, -math.inf

    for outer in range(opts.max_outer_iterations):
        pair = solve_state(Y, Yb, mesh, alpha, phi, opts, u)
        require_converged(pair, f"outer iteration {outer} (alpha={alpha}, c={c})")
        history.append(pair.lam)
        new_phi, threshold = bathtub_step(Y, mesh, pair.u, c)

        same_support = np.array_equal(new_phi.support(), phi.support())
        settled = float(np.max(np.abs(new_phi.values - phi.values))) <= 1e-9
        small_change = len(history) > 1 and \
            abs(history[-1] - history[-2]) <= opts.outer_tolerance * abs(history[-1])
        logger.debug(f"outer {outer}: Lambda={pair.lam:.12g} support_stable={same_support}")
        if same_support and settled and (small_change or len(history) == 1):
            converged = True
            break
        phi, u = new_phi, pair.u

    final_lam = energy(Y, mesh, alpha, new_phi, pair.u)
    history.append(final_lam)
    report = el_residual_report(Y, Yb, mesh, alpha, new_phi, pair.u, eps=opts.regularization)

    result = OptimalPair(
        u=pair.u,
        phi=new_phi,
        lam=final_lam,
        threshold=threshold,
        alpha=float(alpha),
        c=c,
        outer_history=history,
        converged=converged,
        el_residual=report["relative_residual"],
        multiplier=report["multiplier"],
        state=pair,
    )
    if converged:
        logger.info(f"Alternating optimization converged after {result.outer_iterations} rounds: "
                    f"Lambda({alpha}, {c:.6g})={final_lam:.10g}")
    else:
        logger.warning(f"Alternating optimization stopped after {opts.max_outer_iterations} rounds "
                       f"without a stable density")
    return result


def directional_derivative(Y: YoungFunction,
                           mesh: Mesh,
                           alpha: float,
                           pair: OptimalPair,
                           f: Direction) -> float:
    """Right derivative of Lambda at pair.phi along f: alpha * sum f * cell modular of u."""
    if not isinstance(f, Direction):
        f = Direction.for_density(mesh, pair.phi, f)
    return float(alpha * np.dot(f.values, cell_modular(Y, mesh, pair.u)))


def random_direction(mesh: Mesh, phi: DesignDensity, rng: np.random.Generator) -> Direction:
    """
    Draw a valid direction with max |f| = 1.

    Mass is added on a random subset of cells with phi < 1 and removed from
    a random subset of cells with phi > 0.
    """
    can_grow = np.flatnonzero(phi.values < 1.0)
    can_shrink = np.flatnonzero(phi.values > 0.0)
    values = np.zeros(mesh.n_cells)
    if can_grow.size == 0 or can_shrink.size == 0:
        return Direction(values)

    grow = rng.random(can_grow.size) * (rng.random(can_grow.size) < 0.5)
    shrink = rng.random(can_shrink.size) * (rng.random(can_shrink.size) < 0.5)
    if not grow.any():
        grow[rng.integers(can_grow.size)] = 1.0
    if not shrink.any():
        shrink[rng.integers(can_shrink.size)] = 1.0

    positive = np.zeros(mesh.n_cells)
    negative = np.zeros(mesh.n_cells)
    positive[can_grow] = grow
    negative[can_shrink] = shrink
    positive /= np.dot(positive, mesh.cell_areas)
    negative /= np.dot(negative, mesh.cell_areas)
    values = positive - negative
    values /= np.abs(values).max()
    # remove the rounding drift of the mean on cells that may move either way
    drift = np.dot(values, mesh.cell_areas)
    both = (phi.values > 0.0) & (phi.values < 1.0)
    if both.any() and abs(drift) > 0:
        values[both] -= drift / mesh.cell_areas[both].sum()
    return Direction.for_density(mesh, phi, values, tolerance=1e-10)


def level_set_measure(mesh: Mesh, u: FieldLike, s: float, delta: float,
                      Y: Optional[YoungFunction] = None) -> float:
    """
    Area of cells whose level lies in [s - delta, s + delta].

    The level of a cell is its barycentric u-average, or, when Y is given,
    G^{-1} of its bathtub key, the scale of the threshold t returned by
    bathtub_step.
    """
    if delta <= 0:
        raise ConfigurationError(f"Band half-width must be positive, got {delta}")
    if Y is None:
        levels = as_values(u)[mesh.cells].mean(axis=1)
    else:
        levels = np.array([inverse_G(Y, float(key)) for key in cell_keys(Y, mesh, u)])
    inside = (levels >= s - delta) & (levels <= s + delta)
    return float(mesh.cell_areas[inside].sum())


def symmetrize_disk(field_in: PolarField) -> PolarField:
    """
    Cap symmetrization about the positive x-axis.

    Each ring is sorted in decreasing order and laid out by increasing
    |angle|, so every super-level set becomes a cap centred at angle 0.
    """
    if not isinstance(field_in, PolarField):
        raise ConfigurationError("Symmetrization needs a field on a structured polar grid")
    grid = field_in.grid
    ordered = -np.sort(-field_in.values, axis=1)
    result = np.empty_like(field_in.values)
    result[:, grid.cap_order] = ordered
    return PolarField(grid, result)


def cap_rearrange_set(grid: PolarGrid, mask: np.ndarray, lower: bool = True) -> np.ndarray:
    """
    Ring-wise rearrangement of a set on the polar grid.

    The upper version places each ring's samples around angle 0; the lower
    version places them around angle pi, which realizes -(-chi_D)^*.
    """
    mask = np.asarray(mask, dtype=bool)
    order = grid.cap_order[::-1] if lower else grid.cap_order
    result = np.zeros_like(mask)
    for ring, count in enumerate(mask.sum(axis=1)):
        result[ring, order[:count]] = True
    return result


def symmetrization_checks(Y: YoungFunction,
                          field_in: PolarField,
                          hole_mask: Optional[np.ndarray] = None,
                          alpha: float = 1.0,
                          tolerance_factor: float = 1.0) -> Dict[str, Any]:
    """
    Modular identities and inequalities under cap symmetrization.

    (i) bulk modular preserved, (ii) boundary modular preserved,
    (iii) gradient modular not increased, (iv) weighted modular with the
    lower rearrangement of alpha * chi_D not increased. Each comparison
    uses the slack tau = tolerance_factor * h * max(1, |value|).
    """
    if not isinstance(field_in, PolarField):
        raise ConfigurationError("Symmetrization checks need a polar field")
    u = field_in.values
    if np.any(u < 0.0):
        raise AdmissibilityError("Symmetrization is defined for nonnegative fields")

    grid = field_in.grid
    u_star = symmetrize_disk(field_in).values
    weights = grid.node_weights()
    boundary = grid.boundary_weights()
    h = grid.mesh_size

    def slack(value: float) -> float:
        return tolerance_factor * h * max(1.0, abs(value))

    bulk = (float(np.sum(weights * Y(u))), float(np.sum(weights * Y(u_star))))
    trace = (float(np.dot(boundary, Y(u[-1]))), float(np.dot(boundary, Y(u_star[-1]))))
    mag, areas = grid.gradient_magnitudes(u)
    mag_star, _ = grid.gradient_magnitudes(u_star)
    gradient = (float(np.sum(areas * Y(mag))), float(np.sum(areas * Y(mag_star))))

    checks: Dict[str, Dict[str, Any]] = {
        "bulk": {"original": bulk[0], "symmetrized": bulk[1],
                 "passed": abs(bulk[1] - bulk[0]) <= slack(bulk[0])},
        "boundary": {"original": trace[0], "symmetrized": trace[1],
                     "passed": abs(trace[1] - trace[0]) <= slack(trace[0])},
        "gradient": {"original": gradient[0], "symmetrized": gradient[1],
                     "passed": gradient[1] <= gradient[0] + slack(gradient[0])},
    }
    if hole_mask is not None:
        hole = np.asarray(hole_mask, dtype=bool)
        hole_star = cap_rearrange_set(grid, hole, lower=True)
        weighted = (float(alpha * np.sum(weights * hole * Y(u))),
                    float(alpha * np.sum(weights * hole_star * Y(u_star))))
        checks["weighted"] = {"alpha": float(alpha), "original": weighted[0], "symmetrized": weighted[1],
                              "passed": weighted[1] <= weighted[0] + slack(weighted[0])}

    for check in checks.values():
        check["passed"] = bool(check["passed"])
    return {
        "checks": checks,
        "tolerance_scale": tolerance_factor * h,
        "field_deviation": float(np.max(np.abs(u_star - u))),
        "passed": all(check["passed"] for check in checks.values()),
    }


def symmetry_deviation(mesh: Mesh, phi: DesignDensity, c: Optional[float] = None,
                       n_bands: Optional[int] = None) -> float:
    """
    Radial-profile distance between phi and the centred region of measure c.

    Cells are binned into radial bands by barycentric radius; the reference
    fills cells by increasing radius up to volume c. The result is the sum
    over bands of |area of phi in the band - area of the reference in the band|.
    """
    c = phi.volume(mesh) if c is None else _check_volume(mesh, c)
    if n_bands is None:
        n_bands = mesh.levels if mesh.domain == "disk" and mesh.levels > 0 \
            else max(1, int(round(1.0 / mesh.mesh_size)))
    radius = np.hypot(mesh.barycenters[:, 0], mesh.barycenters[:, 1])
    reference, _ = bathtub_fill(radius, mesh.cell_areas, c)
    bands = np.minimum((radius * n_bands).astype(int), n_bands - 1)
    own = np.bincount(bands, weights=phi.values * mesh.cell_areas, minlength=n_bands)
    ref = np.bincount(bands, weights=reference * mesh.cell_areas, minlength=n_bands)
    return float(np.abs(own - ref).sum())
