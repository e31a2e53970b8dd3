"""
Command-Line Driver for the Steklov Design System
Parses the run document, runs one experiment and writes its artifacts
"""

import argparse
import logging
import os
import sys
from typing import Any, Callable, Dict, List, NoReturn, Optional

import numpy as np
import pandas as pd

# Add the parent directory to path for imports
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from steklov_design_core.design import (alternate_optimize, bathtub_optimality,
                                        directional_derivative, random_direction, sublevel_report,
                                        symmetrization_checks, symmetrize_disk, symmetry_deviation)
from steklov_design_core.exceptions import (ConfigurationError, ConvergenceError, InvariantViolation,
                                            SteklovDesignError)
from steklov_design_core.limits import monotonicity_in_c, solve_limit, sweep_alpha, zero_set_area
from steklov_design_core.mesh import PolarField, PolarGrid, sample_polar
from steklov_design_core.state import el_residual_report, positivity_report, solve_state
from steklov_design_core.young import check_young_properties, sobolev_conjugate_inverse
from solver_config.config import config
from solver_config.run_config import RunConfig, load_run_config
from result_io.artifact_writer import ArtifactWriter

logger = logging.getLogger(__name__)

COMMANDS = ("young-check", "solve", "optimize", "limit", "sweep", "symmetry")


def configure_logging(quiet: bool = False) -> None:
    level = logging.WARNING if quiet else getattr(logging, config.logging.LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(level=level, format=config.logging.LOG_FORMAT, force=True)
    if config.logging.LOG_FILE:
        handler = logging.FileHandler(config.logging.LOG_FILE)
        handler.setFormatter(logging.Formatter(config.logging.LOG_FORMAT))
        logging.getLogger().addHandler(handler)


def _residual_summary(report: Dict[str, Any]) -> Dict[str, Any]:
    return {k: v for k, v in report.items() if k not in ("residual_vector", "per_node")}


def _require(checks: Dict[str, Any], what: str) -> None:
    if not checks.get("passed", False):
        failed = [k for k, v in checks.items() if isinstance(v, dict) and v.get("passed") is False]
        raise InvariantViolation(f"{what} checks failed: {failed or checks}", context={"checks": checks})


class ExperimentRunner:
    """
    Runs one command of the driver.

    This class:
    - Builds growth laws, mesh and solver options from the run document
    - Dispatches to the numerical core
    - Writes CSV artifacts and the JSON summary, then enforces the checks
    """

    def __init__(self, run: RunConfig, writer: ArtifactWriter, seed: int):
        self.run = run
        self.writer = writer
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.Y = run.bulk()
        self.Yb = run.boundary()
        self.opts = run.solver_options(config.solver.to_options())
        self._mesh = None
        logger.info(f"Runner initialized: G={self.Y!r}, seed={seed}, output={writer.out_dir}")

    @property
    def mesh(self):
        if self._mesh is None:
            self._mesh = self.run.domain.build()
        return self._mesh

    def settings(self) -> Dict[str, Any]:
        return {**config.as_dict(), "solver_options": self.opts.model_dump(),
                "run": self.run.model_dump(), "seed": self.seed}

    def finish(self, command: str, results: Dict[str, Any]) -> Dict[str, Any]:
        summary = {"command": command, "settings": self.settings(), **results}
        self.writer.write_summary(summary)
        return summary

    def young_check(self) -> Dict[str, Any]:
        laws = {"bulk": self.Y}
        if self.run.boundary_young is not None:
            laws["boundary"] = self.Yb
        reports = {}
        rows = []
        for name, law in laws.items():
            report = check_young_properties(law, config.young.N_SAMPLES, self.rng, config.young.TOLERANCE)
            report["young"] = law.describe()
            report["sobolev"] = sobolev_conjugate_inverse(law, config.young.SOBOLEV_DIMENSION, 1.0)
            reports[name] = report
            rows += [{"law": name, "property": key, "passed": value["passed"]}
                     for key, value in report.items() if isinstance(value, dict) and "passed" in value]
        self.writer.write_frame("young_checks", pd.DataFrame(rows, columns=["law", "property", "passed"]))
        passed = all(r["passed"] for r in reports.values())
        self.finish("young-check", {"reports": reports, "passed": passed})
        _require({"passed": passed, **reports}, "Young-function")
        return reports

    def solve(self) -> Dict[str, Any]:
        mesh = self.mesh
        phi = self.run.build_density(mesh)
        alpha = self.run.scalar_alpha
        pair = solve_state(self.Y, self.Yb, mesh, alpha, phi, self.opts)
        self.writer.write_field("u", pair.u)
        self.writer.write_density("phi", phi)
        self.writer.write_frame("history", pair.history_frame())
        results = {
            "pair": pair.summary(),
            "lambda": pair.lam,
            "volume": phi.volume(mesh),
            "residual": _residual_summary(el_residual_report(self.Y, self.Yb, mesh, alpha, phi, pair)),
            "positivity": positivity_report(mesh, pair),
        }
        self.finish("solve", results)
        if not pair.converged:
            raise ConvergenceError(f"State solve {pair.status} after {pair.iterations} iterations",
                                   context=pair.summary())
        return results

    def _optimality_checks(self, pair, alpha: float) -> Dict[str, Any]:
        mesh = self.mesh
        history = np.array(pair.outer_history)
        step_slack = 1e-12 * max(abs(pair.lam), 1.0)
        derivatives = [
            directional_derivative(self.Y, mesh, alpha, pair, random_direction(mesh, pair.phi, self.rng))
            for _ in range(config.symmetry.N_DIRECTIONS)
        ]
        checks = {
            "sublevel": sublevel_report(self.Y, mesh, pair.u, pair.phi),
            "bathtub": bathtub_optimality(self.Y, mesh, pair.u, pair.phi, rng=self.rng),
            "outer_monotone": {"passed": bool(np.all(np.diff(history) <= step_slack))},
            "first_order": {"passed": bool(min(derivatives, default=0.0) >= -1e-8),
                            "min_derivative": min(derivatives, default=0.0)},
            "el_residual": {"passed": bool(pair.el_residual < 1e-6), "value": pair.el_residual},
        }
        checks["passed"] = all(v["passed"] for v in checks.values())
        return checks

    def optimize(self) -> Dict[str, Any]:
        mesh = self.mesh
        alpha = self.run.scalar_alpha
        pair = alternate_optimize(self.Y, self.Yb, mesh, alpha, self.run.c, self.opts)
        self.writer.write_field("u", pair.u)
        self.writer.write_density("phi", pair.phi)
        self.writer.write_frame("outer_history", pd.DataFrame({
            "outer": np.arange(len(pair.outer_history)), "lambda": pair.outer_history}))
        checks = self._optimality_checks(pair, alpha)
        results = {"pair": pair.summary(), "lambda": pair.lam, "checks": checks}
        if mesh.domain == "disk":
            results["symmetry_deviation"] = symmetry_deviation(mesh, pair.phi, self.run.c)
        self.finish("optimize", results)
        _require(checks, "Optimal pair")
        return results

    def limit(self) -> Dict[str, Any]:
        mesh = self.mesh
        alphas = config.limits.CONTINUATION_ALPHAS
        pair = solve_limit(self.Y, self.Yb, mesh, self.run.c, self.opts, alphas)
        self.writer.write_field("u", pair.u)
        self.writer.write_density("hole", pair.phi)
        zero_area = zero_set_area(mesh, pair.u)
        checks = {
            "positivity": {"passed": bool(pair.positivity.get("strictly_positive", True)), **pair.positivity},
            "zero_set": {"passed": bool(abs(zero_area - pair.hole_area) <= 1e-14 * mesh.area),
                         "zero_set_area": zero_area, "hole_area": pair.hole_area},
            "volume": {"passed": pair.volume_within_one_cell, "c": pair.c, "hole_area": pair.hole_area,
                       "max_cell_area": pair.cell_bound},
        }
        if self.run.c_grid:
            report = monotonicity_in_c(self.Y, self.Yb, mesh, self.run.c_grid, self.opts,
                                       n_samples=config.limits.N_RANDOM_HOLES,
                                       small_fractions=config.limits.SMALL_C_FRACTIONS,
                                       margin=config.limits.MONOTONICITY_MARGIN, seed=self.seed,
                                       n_jobs=config.limits.N_JOBS, continuation=alphas)
            self.writer.write_frame("monotonicity", pd.DataFrame({
                "c": report["c_grid"], "lambda": report["lambda"], "hole_area": report["hole_areas"]}))
            self.writer.write_frame("hole_samples", pd.DataFrame(report.pop("samples")))
            checks["monotonicity"] = report
        checks["passed"] = all(v["passed"] for v in checks.values())
        self.finish("limit", {"pair": pair.summary(), "lambda": pair.lam, "checks": checks})
        _require(checks, "Limit")
        return checks

    def sweep(self) -> Dict[str, Any]:
        alphas = self.run.alphas if len(self.run.alphas) > 1 else config.limits.SWEEP_ALPHAS
        result = sweep_alpha(self.Y, self.Yb, self.mesh, self.run.c, alphas, self.opts,
                             tolerance=config.limits.BOUND_TOLERANCE)
        self.writer.write_frame("sweep", result.frame())
        self.writer.write_field("limit_u", result.limit.u)
        self.writer.write_density("limit_hole", result.limit.phi)
        self.finish("sweep", {"limit": result.limit.summary(), "upper_bound": result.upper_bound,
                              "checks": result.checks})
        _require(result.checks, "Sweep")
        return result.checks

    def _polar_field(self, grid: PolarGrid) -> Dict[str, Any]:
        spec = self.run.symmetry
        if spec.source == "radial":
            return {"field": grid.from_function(lambda r, theta: 1.0 + r ** 2)}
        if spec.source == "file":
            try:
                frame = pd.read_csv(spec.path)
            except (OSError, ValueError) as exc:
                raise ConfigurationError(f"Cannot read polar field {spec.path}: {exc}") from exc
            return {"field": PolarField.from_frame(grid, frame)}
        mesh = self.mesh
        if mesh.domain != "disk":
            raise ConfigurationError("Symmetrization of a solution needs a disk domain")
        pair = alternate_optimize(self.Y, self.Yb, mesh, self.run.scalar_alpha, self.run.c, self.opts)
        self.writer.write_field("u", pair.u)
        self.writer.write_density("phi", pair.phi)
        return {"field": sample_polar(mesh, pair.u, grid), "pair": pair.summary(),
                "symmetry_deviation": symmetry_deviation(mesh, pair.phi, self.run.c)}

    def symmetry(self) -> Dict[str, Any]:
        spec = self.run.symmetry
        grid = PolarGrid(spec.n_rings or config.symmetry.N_RINGS, spec.n_angles or config.symmetry.N_ANGLES)
        source = self._polar_field(grid)
        field = source.pop("field")
        hole = spec.hole.mask(grid) if spec.hole is not None else None
        report = symmetrization_checks(self.Y, field, hole, alpha=spec.alpha,
                                       tolerance_factor=config.symmetry.TOLERANCE_FACTOR)
        self.writer.write_polar("polar_u", field)
        self.writer.write_polar("polar_u_star", symmetrize_disk(field))
        results = {"checks": report, "deviation": report["field_deviation"], **source}
        self.finish("symmetry", results)
        _require(report, "Symmetrization")
        return results


class CommandParser(argparse.ArgumentParser):
    """Argument parser that reports usage errors as configuration errors."""

    def error(self, message: str) -> NoReturn:
        raise ConfigurationError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = CommandParser(prog="steklov-design",
                           description="Optimal design of Steklov eigenvalues under Orlicz growth")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON run document")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="seed for randomized checks")
    parser.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command; returns 0, or 1 (configuration), 2 (non-convergence), 3 (violated check)."""
    try:
        args = build_parser().parse_args(argv)
    except ConfigurationError as e:
        configure_logging()
        logger.error(f"Invalid command line: {e}")
        return e.exit_code
    configure_logging(args.quiet)

    try:
        run = load_run_config(args.config)
        seed = run.seed if args.seed is None else args.seed
        out_dir = args.out or run.output_dir or config.output.OUTPUT_DIR
        writer = ArtifactWriter(out_dir, config.output.FLOAT_FORMAT, config.output.SUMMARY_FILE)
        runner = ExperimentRunner(run, writer, seed)
        handlers: Dict[str, Callable[[], Dict[str, Any]]] = {
            "young-check": runner.young_check,
            "solve": runner.solve,
            "optimize": runner.optimize,
            "limit": runner.limit,
            "sweep": runner.sweep,
            "symmetry": runner.symmetry,
        }
        handlers[args.command]()
    except SteklovDesignError as e:
        logger.error(f"{args.command} failed: {e}")
        return e.exit_code

    logger.info(f"{args.command} finished")
    return 0


if __name__ == "__main__":
    sys.exit(main())
