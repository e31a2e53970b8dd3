#!/usr/bin/env python3
"""
Test Command-Line Driver
Exit codes, summaries and CSV artifacts of the experiment commands
"""

import sys
import os
import json

import pytest

# Add the current directory to path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from cli_services import main as cli
from result_io.artifact_writer import ArtifactWriter, strip_timestamp, to_jsonable
from steklov_design_core.exceptions import InvariantViolation
from steklov_design_core.mesh import build_unit_disk
from steklov_design_core.oracles import bessel_steklov_ratio


def write_run(tmp_path, name="run.json", **document):
    path = tmp_path / name
    path.write_text(json.dumps(document))
    return str(path)


def read_summary(out_dir):
    return json.loads((out_dir / "summary.json").read_text())


def test_solve_disk_benchmark(tmp_path):
    """Test the solve command against the Bessel ratio and its artifacts."""
    out = tmp_path / "solve"
    run = write_run(tmp_path, domain={"kind": "disk", "level": 5}, alpha=0.0)
    assert cli.main(["solve", "--config", run, "--out", str(out), "--quiet"]) == 0

    summary = read_summary(out)
    assert summary["command"] == "solve"
    assert summary["lambda"] == pytest.approx(bessel_steklov_ratio(), rel=1e-2)
    assert summary["pair"]["converged"]
    assert summary["artifacts"] == ["history.csv", "phi.csv", "u.csv"]
    assert "residual_vector" not in summary["residual"]

    writer = ArtifactWriter(out)
    assert len(writer.read_field("u")) == build_unit_disk(5).n_vertices
    assert writer.read_density("phi").values.sum() == 0.0
    assert list(writer.read_frame("history").columns) == ["iter", "I", "J", "residual", "step"]


def test_missing_config_is_exit_one(tmp_path):
    """Test that an unreadable run document maps to exit code 1."""
    assert cli.main(["solve", "--config", str(tmp_path / "missing.json"), "--quiet"]) == 1


@pytest.mark.parametrize("argv", [
    ["bogus"],
    ["solve", "--unknown-option"],
    [],
])
def test_bad_command_line_is_exit_one(argv):
    """Test that an unknown command or option maps to exit code 1."""
    assert cli.main(argv) == 1


def test_invalid_volume_is_exit_one(tmp_path):
    """Test that a volume outside the domain maps to exit code 1."""
    run = write_run(tmp_path, domain={"kind": "square", "level": 2}, c=3.0)
    assert cli.main(["optimize", "--config", run, "--out", str(tmp_path / "out"), "--quiet"]) == 1


def test_non_convergence_is_exit_two(tmp_path):
    """Test that a truncated solve writes its summary and exits with code 2."""
    out = tmp_path / "short"
    run = write_run(tmp_path, domain={"kind": "square", "level": 3}, solver={"max_iterations": 1})
    assert cli.main(["solve", "--config", run, "--out", str(out), "--quiet"]) == 2
    assert not read_summary(out)["pair"]["converged"]


def test_violated_check_is_exit_three(tmp_path, monkeypatch):
    """Test that a failed structural check maps to exit code 3."""
    def failing(self):
        raise InvariantViolation("forced")

    monkeypatch.setattr(cli.ExperimentRunner, "solve", failing)
    assert cli.main(["solve", "--out", str(tmp_path / "out"), "--quiet"]) == 3


def test_optimize_summary_is_reproducible(tmp_path):
    """Test that two runs with the same seed give the same summary up to the timestamp."""
    run = write_run(tmp_path, domain={"kind": "disk", "level": 3}, alpha=10.0, c=0.7)
    summaries = []
    for name in ("first", "second"):
        out = tmp_path / name
        assert cli.main(["optimize", "--config", run, "--out", str(out), "--seed", "5", "--quiet"]) == 0
        summaries.append(strip_timestamp(read_summary(out)))
    assert summaries[0] == summaries[1]
    checks = summaries[0]["checks"]
    assert checks["passed"]
    assert checks["el_residual"]["value"] < 1e-6
    assert "symmetry_deviation" in summaries[0]


def test_optimize_without_volume_matches_solve(tmp_path):
    """Test that c = 0 reproduces the unweighted eigenvalue."""
    optimize_run = write_run(tmp_path, "optimize.json", domain={"kind": "square", "level": 3}, alpha=10.0, c=0.0)
    solve_run = write_run(tmp_path, "solve.json", domain={"kind": "square", "level": 3}, alpha=0.0)
    assert cli.main(["optimize", "--config", optimize_run, "--out", str(tmp_path / "o"), "--quiet"]) == 0
    assert cli.main(["solve", "--config", solve_run, "--out", str(tmp_path / "s"), "--quiet"]) == 0
    assert read_summary(tmp_path / "o")["lambda"] == pytest.approx(read_summary(tmp_path / "s")["lambda"],
                                                                   rel=1e-9)


def test_young_check(tmp_path):
    """Test the property suite command and its table."""
    out = tmp_path / "young"
    run = write_run(tmp_path, young={"family": "power_log", "params": {"p": 2.0}})
    assert cli.main(["young-check", "--config", run, "--out", str(out), "--quiet"]) == 0
    summary = read_summary(out)
    assert summary["passed"]
    assert summary["reports"]["bulk"]["young"]["family"] == "power_log"
    assert "young_checks.csv" in summary["artifacts"]


def test_symmetry_of_radial_field(tmp_path):
    """Test that a radial field is its own symmetrization."""
    out = tmp_path / "symmetry"
    run = write_run(tmp_path, symmetry={"source": "radial", "n_rings": 8, "n_angles": 16})
    assert cli.main(["symmetry", "--config", run, "--out", str(out), "--quiet"]) == 0
    summary = read_summary(out)
    assert summary["deviation"] <= 1e-10
    assert summary["checks"]["passed"]
    assert sorted(summary["artifacts"]) == ["polar_u.csv", "polar_u_star.csv"]


def test_symmetry_weight_from_run_document(tmp_path):
    """Test that the weighted comparison runs at the alpha of the symmetry section."""
    out = tmp_path / "weighted"
    run = write_run(tmp_path, alpha=[0.5, 2.0],
                    symmetry={"source": "radial", "n_rings": 8, "n_angles": 16, "alpha": 5.0})
    assert cli.main(["symmetry", "--config", run, "--out", str(out), "--quiet"]) == 0
    weighted = read_summary(out)["checks"]["checks"]["weighted"]
    assert weighted["alpha"] == 5.0
    assert weighted["passed"]


def test_symmetry_needs_disk(tmp_path):
    """Test that symmetrizing a square solution is a configuration error."""
    run = write_run(tmp_path, domain={"kind": "square", "level": 2}, alpha=1.0, c=0.25)
    assert cli.main(["symmetry", "--config", run, "--out", str(tmp_path / "out"), "--quiet"]) == 1


def test_to_jsonable_non_finite():
    """Test the string encoding of non-finite values."""
    document = to_jsonable({"a": float("inf"), "b": [float("-inf"), float("nan")], "c": (1, 2.5)})
    assert document == {"a": "inf", "b": ["-inf", "nan"], "c": [1, 2.5]}
    json.dumps(document, allow_nan=False)
