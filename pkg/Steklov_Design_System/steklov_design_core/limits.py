"""
Large-Weight Limit
The hole problem lambda(infinity, c), the alpha sweep towards it, the upper
bound K and the strict monotonicity of the limit in the volume
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .design import (OptimalPair, alternate_optimize, bathtub_order, cell_keys,
                     require_converged)
from .exceptions import ConfigurationError, ConvergenceError, NotProjectableError
from .mesh import Mesh
from .modular import DesignDensity, NodalField, sobolev_modular, weighted_modular
from .state import (SolverOptions, el_residual_report, pinned_vertices, positivity_report,
                    solve_hole_state, solve_set_state, solve_state)
from .young import YoungFunction

logger = logging.getLogger(__name__)

CONTINUATION_ALPHAS = (1.0, 10.0, 100.0, 1000.0, 10000.0)
SWEEP_COLUMNS = ["alpha", "lambda", "weighted", "alpha_weighted", "hole_gap", "indicator_gap",
                 "modular_distance", "converged"]


@dataclass
class SweepRecord:
    alpha: float
    lam: float
    weighted: float
    alpha_weighted: float
    hole_gap: float
    indicator_gap: float
    modular_distance: float
    converged: bool = True


@dataclass
class LimitPair(OptimalPair):
    """Optimal pair of the hole problem: phi is the indicator of the (closed) hole."""
    hole_cells: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    hole_area: float = 0.0
    positivity: Dict[str, Any] = field(default_factory=dict)
    cell_bound: float = math.inf

    @property
    def volume_within_one_cell(self) -> bool:
        mismatch = self.hole_area - self.c
        return bool(-1e-12 * max(self.c, 1.0) <= mismatch <= self.cell_bound * (1.0 + 1e-12))

    def summary(self) -> Dict[str, Any]:
        summary = super().summary()
        summary.update({
            "hole_cells": int(len(self.hole_cells)),
            "hole_area": self.hole_area,
            "volume_mismatch": self.hole_area - self.c,
            "volume_within_one_cell": self.volume_within_one_cell,
            "strictly_positive": bool(self.positivity.get("strictly_positive", True)),
        })
        return summary


@dataclass
class SweepResult:
    records: List[SweepRecord]
    upper_bound: float
    limit: LimitPair
    checks: Dict[str, Any]

    def frame(self) -> pd.DataFrame:
        rows = [{
            "alpha": r.alpha, "lambda": r.lam, "weighted": r.weighted,
            "alpha_weighted": r.alpha_weighted, "hole_gap": r.hole_gap,
            "indicator_gap": r.indicator_gap, "modular_distance": r.modular_distance,
            "converged": r.converged,
        } for r in self.records]
        return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def close_hole(mesh: Mesh, cells: Sequence[int]) -> np.ndarray:
    """Add every cell whose three vertices are already pinned by the hole."""
    pinned = pinned_vertices(mesh, cells)
    if pinned.size == 0:
        return np.zeros(0, dtype=np.int64)
    return np.flatnonzero(np.isin(mesh.cells, pinned).all(axis=1))


def closed_hole_fill(mesh: Mesh, keys: np.ndarray, c: float,
                     preference: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Closed whole-cell hole with area in [c, c + largest cell area].

    Cells are taken in bathtub order and the hole is the closure of the cells
    taken so far. A cell whose closure would pass that ceiling is skipped in
    favour of the next cell in order that stays below it; when none does the
    cell is taken anyway and the overshoot shows up in the volume check.
    """
    if c <= 0.0:
        return np.zeros(0, dtype=np.int64)
    ceiling = c + float(mesh.cell_areas.max())
    remaining = [int(i) for i in bathtub_order(keys, preference)]
    taken: List[int] = []
    hole, area = np.zeros(0, dtype=np.int64), 0.0

    while remaining and area < c * (1.0 - 1e-14):
        chosen = remaining[0]
        trial = close_hole(mesh, taken + [chosen])
        if mesh.cell_areas[trial].sum() > ceiling:
            for cell in remaining[1:]:
                alternative = close_hole(mesh, taken + [cell])
                if mesh.cell_areas[alternative].sum() <= ceiling:
                    chosen, trial = cell, alternative
                    break
        taken.append(chosen)
        hole, area = trial, float(mesh.cell_areas[trial].sum())
        inside = set(hole.tolist())
        remaining = [i for i in remaining if i != chosen and i not in inside]
    return hole


def boundary_distance(mesh: Mesh, points: np.ndarray) -> np.ndarray:
    """Exact distance from each point to the polygonal boundary."""
    points = np.atleast_2d(points)
    start = mesh.vertices[mesh.boundary_edges[:, 0]]
    segment = mesh.vertices[mesh.boundary_edges[:, 1]] - start
    offset = points[:, None, :] - start[None, :, :]
    t = np.clip(np.einsum("ped,ed->pe", offset, segment) / np.einsum("ed,ed->e", segment, segment),
                0.0, 1.0)
    gap = offset - t[..., None] * segment[None, :, :]
    return np.sqrt(np.einsum("ped,ped->pe", gap, gap)).min(axis=1)


def _check_limit_volume(mesh: Mesh, c: float) -> float:
    if c < 0 or c >= mesh.area:
        raise ConfigurationError(f"Hole volume c={c} outside [0, |domain| = {mesh.area:.12g})")
    return float(c)


def upper_bound_K(Y: YoungFunction,
                  Yb: YoungFunction,
                  mesh: Mesh,
                  c: float,
                  opts: Optional[SolverOptions] = None) -> float:
    """
    Alpha-independent upper bound for Lambda(alpha, c).

    D0 gathers the cells farthest from the boundary (rounded up to whole
    cells, closed); u0 solves the alpha = 0 problem pinned to zero on D0, so
    the weighted term of u0 vanishes for a density supported in D0 and
    I(u0) bounds Lambda(alpha, c) for every alpha.
    """
    if c < 0 or c > mesh.area * (1.0 + 1e-12):
        raise ConfigurationError(f"Volume c={c} outside [0, |domain| = {mesh.area:.12g}]")
    if c >= mesh.area * (1.0 - 1e-12):
        logger.warning("No admissible hole for c = |domain|; K is infinite")
        return math.inf
    if c == 0.0:
        return solve_state(Y, Yb, mesh, 0.0, 0.0, opts).lam

    depth = boundary_distance(mesh, mesh.barycenters)
    cells = closed_hole_fill(mesh, -depth, c)
    try:
        pair = solve_hole_state(Y, Yb, mesh, cells, opts)
    except NotProjectableError:
        logger.warning(f"Reference hole for c={c} covers the boundary; K is infinite")
        return math.inf
    if not pair.converged:
        # any admissible u0 still gives a valid bound
        logger.warning(f"Reference hole solve {pair.status}; K={pair.lam:.10g} is still an upper bound")
    logger.info(f"Upper bound K={pair.lam:.10g} from a hole of {len(cells)} cells")
    return pair.lam


def solve_limit(Y: YoungFunction,
                Yb: YoungFunction,
                mesh: Mesh,
                c: float,
                opts: Optional[SolverOptions] = None,
                continuation: Sequence[float] = CONTINUATION_ALPHAS) -> LimitPair:
    """
    lambda(infinity, c) and its optimal hole.

    The relaxed problem is first followed along increasing alpha with warm
    starts. Its last state seeds a whole-cell hole, which is then refined by
    alternating hole solves with whole-cell bathtub steps; among cells where
    u vanishes, the ones deepest in the last relaxed state are kept first.

    Raises:
        ConfigurationError: when c is outside [0, |domain|)
        ConvergenceError: when an inner solve does not converge
    """
    opts = opts or SolverOptions()
    c = _check_limit_volume(mesh, c)

    if c == 0.0:
        state = solve_state(Y, Yb, mesh, 0.0, 0.0, opts)
        require_converged(state, "limit solve with c=0")
        return LimitPair(u=state.u, phi=DesignDensity(np.zeros(mesh.n_cells)), lam=state.lam,
                         threshold=-math.inf, alpha=math.inf, c=0.0, outer_history=[state.lam],
                         el_residual=state.el_residual, multiplier=state.multiplier, state=state,
                         positivity=positivity_report(mesh, state))

    u: Optional[NodalField] = None
    phi: Optional[DesignDensity] = None
    for alpha in continuation:
        relaxed = alternate_optimize(Y, Yb, mesh, alpha, c, opts, u0=u, phi0=phi)
        u, phi = relaxed.u, relaxed.phi
        logger.debug(f"continuation alpha={alpha}: Lambda={relaxed.lam:.10g}")

    depth_rank = cell_keys(Y, mesh, u)
    cells = closed_hole_fill(mesh, depth_rank, c)
    history: List[float] = []
    converged = False
    state = None

    for outer in range(opts.max_outer_iterations):
        state = solve_hole_state(Y, Yb, mesh, cells, opts, u0=u)
        require_converged(state, f"hole iteration {outer} (c={c})")
        history.append(state.lam)
        u = state.u

        keys = cell_keys(Y, mesh, u)
        new_cells = closed_hole_fill(mesh, keys, c, preference=depth_rank)
        if np.array_equal(new_cells, cells):
            converged = True
            break
        cells = new_cells

    phi = DesignDensity.indicator(mesh, cells)
    hole_area = float(mesh.cell_areas[cells].sum())
    positivity = positivity_report(mesh, state)
    if hole_area - c > mesh.cell_areas.max():
        logger.warning(f"Hole area {hole_area:.6g} overshoots c={c:.6g} by more than one cell")
    report = el_residual_report(Y, Yb, mesh, 0.0, 0.0, state)
    if not positivity["strictly_positive"]:
        logger.warning(f"Limit state vanishes at a free vertex (min relative "
                       f"{positivity['min_free_relative']:.3e})")
    logger.info(f"Limit solve c={c:.6g}: lambda(inf)={state.lam:.10g}, hole area {hole_area:.6g} "
                f"({len(cells)} cells)")
    return LimitPair(
        u=u, phi=phi, lam=state.lam, threshold=0.0, alpha=math.inf, c=c,
        outer_history=history, converged=converged,
        el_residual=report["relative_residual"], multiplier=report["multiplier"], state=state,
        hole_cells=cells, hole_area=hole_area, positivity=positivity,
        cell_bound=float(mesh.cell_areas.max()),
    )


def zero_set_area(mesh: Mesh, u: NodalField) -> float:
    """Area of cells on which the P1 field vanishes identically."""
    zero = u.values[mesh.cells] == 0.0
    return float(mesh.cell_areas[zero.all(axis=1)].sum())


def fixed_set_limit(Y: YoungFunction,
                    Yb: YoungFunction,
                    mesh: Mesh,
                    cells: Sequence[int],
                    alphas: Sequence[float],
                    opts: Optional[SolverOptions] = None,
                    tolerance: float = 1e-6) -> Dict[str, Any]:
    """lambda(alpha, E) for a fixed cell set E, against its limit lambda(infinity, E)."""
    cells = np.asarray(cells, dtype=np.int64)
    limit = solve_hole_state(Y, Yb, mesh, cells, opts)
    values: List[float] = []
    u = None
    for alpha in alphas:
        pair = solve_set_state(Y, Yb, mesh, alpha, cells, opts, u0=u)
        require_converged(pair, f"fixed set alpha={alpha}")
        values.append(pair.lam)
        u = pair.u
    values_array = np.array(values)
    scale = tolerance * max(abs(limit.lam), 1.0)
    return {
        "alphas": list(map(float, alphas)),
        "values": values,
        "limit": limit.lam,
        "monotone": bool(np.all(np.diff(values_array) >= -scale)),
        "bounded": bool(np.all(values_array <= limit.lam + scale)),
        "final_gap": float(limit.lam - values_array[-1]) if len(values) else math.nan,
    }


def _non_increasing(values: np.ndarray, slack: float) -> bool:
    return bool(np.all(np.diff(values) <= slack))


def sweep_alpha(Y: YoungFunction,
                Yb: YoungFunction,
                mesh: Mesh,
                c: float,
                alphas: Sequence[float],
                opts: Optional[SolverOptions] = None,
                limit: Optional[LimitPair] = None,
                upper_bound: Optional[float] = None,
                cold_start: bool = True,
                tolerance: float = 1e-6) -> SweepResult:
    """
    Follow Lambda(alpha, c) along increasing alpha with warm starts.

    Every entry records the weighted modular, the gap to the hole limit and
    the distances of (u, phi) to the limit pair. Non-converged entries are
    kept with converged=False and left out of the checks.
    """
    opts = opts or SolverOptions()
    alphas = [float(a) for a in alphas]
    if not alphas or alphas[0] < 0 or np.any(np.diff(alphas) <= 0):
        raise ConfigurationError(f"Sweep alphas must be nonnegative and strictly increasing: {alphas}")

    K = upper_bound_K(Y, Yb, mesh, c, opts) if upper_bound is None else upper_bound
    limit = limit or solve_limit(Y, Yb, mesh, c, opts)
    limit_indicator = limit.phi.values

    records: List[SweepRecord] = []
    pair: Optional[OptimalPair] = None
    for alpha in alphas:
        try:
            pair = alternate_optimize(Y, Yb, mesh, alpha, c, opts,
                                      u0=pair.u if pair else None, phi0=pair.phi if pair else None)
        except ConvergenceError as exc:
            logger.warning(f"Sweep entry alpha={alpha} skipped: {exc}")
            records.append(SweepRecord(alpha, math.nan, math.nan, math.nan, math.nan, math.nan,
                                       math.nan, converged=False))
            pair = None
            continue
        weighted = weighted_modular(Y, mesh, pair.phi, pair.u)
        records.append(SweepRecord(
            alpha=alpha,
            lam=pair.lam,
            weighted=weighted,
            alpha_weighted=alpha * weighted,
            hole_gap=limit.lam - pair.lam,
            indicator_gap=float(np.dot(np.abs(pair.phi.values - limit_indicator), mesh.cell_areas)),
            modular_distance=sobolev_modular(Y, mesh, pair.u.values - limit.u.values),
            converged=pair.converged,
        ))

    good = [r for r in records if r.converged]
    lam = np.array([r.lam for r in good])
    gaps = np.array([r.hole_gap for r in good])
    slack = tolerance * max(float(np.max(np.abs(lam))) if lam.size else 1.0, 1.0)
    bound = K * (1.0 + tolerance)
    checks: Dict[str, Any] = {
        "upper_bound": K,
        "limit_lambda": limit.lam,
        "lambda_non_decreasing": _non_increasing(-lam, slack),
        "bounded_by_K": bool(np.all(lam <= bound)),
        "alpha_weighted_bounded": bool(all(r.alpha_weighted <= bound for r in good)),
        "weighted_bounded": bool(all(r.weighted <= bound / r.alpha for r in good if r.alpha > 0)),
        "hole_gap_non_increasing": _non_increasing(gaps, slack),
        "hole_gap_nonnegative": bool(np.all(gaps >= -slack)),
        "final_relative_gap": float(gaps[-1] / limit.lam) if gaps.size else math.nan,
        "skipped": [r.alpha for r in records if not r.converged],
    }
    tail = np.array([r.modular_distance for r in good if r.alpha > 0][-3:])
    indicator = np.array([r.indicator_gap for r in good if r.alpha > 0])
    checks["modular_distance_decreasing"] = _non_increasing(tail, slack)
    checks["empirical"] = {
        "indicator_gap_decreasing": _non_increasing(indicator, float(mesh.cell_areas.max())),
    }

    if cold_start and good:
        alpha_max = good[-1].alpha
        try:
            cold = alternate_optimize(Y, Yb, mesh, alpha_max, c, opts)
            checks["empirical"]["cold_start"] = {"alpha": alpha_max, "lambda": cold.lam,
                                                 "difference": cold.lam - good[-1].lam}
        except ConvergenceError as exc:
            logger.warning(f"Cold start at alpha={alpha_max} did not converge: {exc}")
            checks["empirical"]["cold_start"] = {"alpha": alpha_max, "lambda": math.nan,
                                                 "difference": math.nan}

    checks["passed"] = all(checks[name] for name in (
        "lambda_non_decreasing", "bounded_by_K", "alpha_weighted_bounded", "weighted_bounded",
        "hole_gap_non_increasing", "hole_gap_nonnegative", "modular_distance_decreasing"))
    if not checks["passed"]:
        logger.warning(f"Sweep checks failed: {checks}")
    return SweepResult(records=records, upper_bound=K, limit=limit, checks=checks)


def _random_hole_value(Y: YoungFunction, Yb: YoungFunction, mesh: Mesh, c: float,
                       opts: Optional[SolverOptions], seed: int) -> Dict[str, Any]:
    rng = np.random.default_rng(seed)
    interior = ~np.isin(mesh.cells, mesh.boundary_vertices).any(axis=1)
    keys = rng.random(mesh.n_cells) + np.where(interior, 0.0, 1.0)
    cells = closed_hole_fill(mesh, keys, c)
    try:
        pair = solve_hole_state(Y, Yb, mesh, cells, opts)
    except NotProjectableError:
        return {"seed": seed, "area": float(mesh.cell_areas[cells].sum()), "lambda": math.inf,
                "converged": True}
    return {"seed": seed, "area": float(mesh.cell_areas[cells].sum()), "lambda": pair.lam,
            "converged": pair.converged}


def monotonicity_in_c(Y: YoungFunction,
                      Yb: YoungFunction,
                      mesh: Mesh,
                      c_grid: Sequence[float],
                      opts: Optional[SolverOptions] = None,
                      n_samples: int = 10,
                      small_fractions: Sequence[float] = (0.1, 0.01, 0.001),
                      margin: float = 1e-6,
                      seed: int = 0,
                      n_jobs: int = 1,
                      continuation: Sequence[float] = CONTINUATION_ALPHAS) -> Dict[str, Any]:
    """
    Strict increase of lambda(infinity, c) on a volume grid.

    Also compares each entry against random hole sets of at least the same
    volume, and tracks the gap to the unconstrained value as c shrinks.
    """
    grid = [float(c) for c in c_grid]
    if any(c <= 0 or c >= mesh.area for c in grid) or np.any(np.diff(grid) <= 0):
        raise ConfigurationError(f"Volume grid must increase strictly inside (0, |domain|): {grid}")

    limits = Parallel(n_jobs=n_jobs)(
        delayed(solve_limit)(Y, Yb, mesh, c, opts, continuation) for c in grid
    )
    values = np.array([p.lam for p in limits])
    increments = np.diff(values)
    strict = bool(np.all(increments > margin * np.abs(values[:-1])))

    jobs = [(i, seed + 1000 * i + j) for i in range(len(grid)) for j in range(n_samples)]
    samples = Parallel(n_jobs=n_jobs)(
        delayed(_random_hole_value)(Y, Yb, mesh, grid[i], opts, s) for i, s in jobs
    )
    sampled_ok = all(s["lambda"] >= values[i] - 1e-8 for (i, _), s in zip(jobs, samples))

    unconstrained = solve_state(Y, Yb, mesh, 0.0, 0.0, opts).lam
    small = Parallel(n_jobs=n_jobs)(
        delayed(solve_limit)(Y, Yb, mesh, f * mesh.area, opts, continuation) for f in small_fractions
    )
    small_gaps = np.array([p.lam - unconstrained for p in small])

    report = {
        "c_grid": grid,
        "lambda": values.tolist(),
        "hole_areas": [p.hole_area for p in limits],
        "increments": increments.tolist(),
        "strictly_increasing": strict,
        "sampled_sets_not_better": bool(sampled_ok),
        "samples": [{"c": grid[i], **s} for (i, _), s in zip(jobs, samples)],
        "zero_set_matches_hole": all(abs(zero_set_area(mesh, p.u) - p.hole_area) <= 1e-14 * mesh.area
                                     for p in limits),
        "volume_within_one_cell": all(p.volume_within_one_cell for p in limits),
        "small_c": {"fractions": list(small_fractions), "gaps": small_gaps.tolist(),
                    "shrinking": bool(np.all(small_gaps >= -margin) and np.all(np.diff(small_gaps) <= margin))},
    }
    report["passed"] = all([report["strictly_increasing"], report["sampled_sets_not_better"],
                            report["zero_set_matches_hole"], report["volume_within_one_cell"],
                            report["small_c"]["shrinking"]])
    return report
