#!/usr/bin/env python3
"""
Test State Solver
Constraint projection, projected descent and Euler-Lagrange diagnostics
"""

import sys
import os

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import linalg

# Add the current directory to path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from steklov_design_core.exceptions import NotProjectableError
from steklov_design_core.mesh import build_unit_disk, build_unit_square, locate_cells_by_predicate
from steklov_design_core.modular import (DesignDensity, energy, energy_gradient, trace_gradient,
                                         trace_modular)
from steklov_design_core.oracles import bessel_hole_eigenvalue, bessel_steklov_ratio
from steklov_design_core.state import (SolverOptions, el_residual_report, multi_start_check,
                                       positivity_report, project_to_constraint, solve_hole_state,
                                       solve_set_state, solve_state)
from steklov_design_core.young import make_young


@pytest.fixture
def quadratic():
    return make_young("power", {"p": 2})


def dense_forms(Y, mesh, alpha, phi):
    """Matrices of the quadratic forms I and J on a small mesh, by polarization."""
    n = mesh.n_vertices
    basis = np.eye(n)
    A = np.empty((n, n))
    B = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            both = basis[i] + basis[j]
            A[i, j] = 0.5 * (energy(Y, mesh, alpha, phi, both) - energy(Y, mesh, alpha, phi, basis[i])
                             - energy(Y, mesh, alpha, phi, basis[j]))
            B[i, j] = 0.5 * (trace_modular(Y, mesh, both) - trace_modular(Y, mesh, basis[i])
                             - trace_modular(Y, mesh, basis[j]))
    return A, B


def test_projection_cubic_closed_form():
    """Test s = 4^(-1/3) for u = 1 on the square with G = t^3."""
    Y = make_young("power", {"p": 3})
    mesh = build_unit_square(3)
    s, projected = project_to_constraint(Y, mesh, np.ones(mesh.n_vertices))
    assert s == pytest.approx(4.0 ** (-1.0 / 3.0), rel=1e-12)
    assert trace_modular(Y, mesh, projected) == pytest.approx(1.0, rel=1e-12)


def test_projection_non_power_law():
    """Test the bisection branch for t^2 log(1 + t)."""
    Y = make_young("power_log", {"p": 2})
    mesh = build_unit_disk(3)
    _, projected = project_to_constraint(Y, mesh, np.linspace(0.1, 2.0, mesh.n_vertices))
    assert trace_modular(Y, mesh, projected) == pytest.approx(1.0, abs=1e-12)


def test_projection_rejects_zero_trace(quadratic):
    """Test that a field vanishing on the boundary cannot be projected."""
    mesh = build_unit_square(3)
    u = np.zeros(mesh.n_vertices)
    interior = np.setdiff1d(np.arange(mesh.n_vertices), mesh.boundary_vertices)
    u[interior] = 1.0
    with pytest.raises(NotProjectableError):
        project_to_constraint(quadratic, mesh, u)


def test_disk_benchmark(quadratic):
    """Test Lambda against I1(1)/I0(1) on the disk at refinement 5."""
    mesh = build_unit_disk(5)
    pair = solve_state(quadratic, quadratic, mesh, 0.0, 0.0)
    assert pair.converged
    assert pair.lam == pytest.approx(bessel_steklov_ratio(), rel=1e-2)
    assert pair.lam == pytest.approx(energy(quadratic, mesh, 0.0, 0.0, pair.u), rel=1e-12)
    assert trace_modular(quadratic, mesh, pair.u) == pytest.approx(1.0, abs=1e-12)
    assert pair.el_residual < 1e-6


def test_disk_benchmark_second_order(quadratic):
    """Test the observed convergence order against the Bessel ratio for k = 2, 4, 8."""
    exact = bessel_steklov_ratio()
    errors = np.array([abs(solve_state(quadratic, quadratic, build_unit_disk(k), 0.0, 0.0).lam - exact)
                       for k in (2, 4, 8)])
    orders = np.log2(errors[:-1] / errors[1:])
    assert np.all(orders > 1.6), orders


def test_descent_is_monotone():
    """Test that I never increases along the accepted iterates."""
    Y = make_young("power_log", {"p": 2})
    mesh = build_unit_square(4)
    pair = solve_state(Y, Y, mesh, 10.0, DesignDensity.uniform(mesh, 0.25))
    energies = pair.history_frame()["I"].to_numpy()
    assert np.all(np.diff(energies) <= 1e-12 * np.abs(energies[1:]))
    assert pair.converged


def test_alpha_zero_ignores_density(quadratic):
    """Test that two densities give the same eigenvalue when alpha = 0."""
    mesh = build_unit_square(4)
    first = solve_state(quadratic, quadratic, mesh, 0.0, DesignDensity.uniform(mesh, 0.25))
    second = solve_state(quadratic, quadratic, mesh, 0.0, DesignDensity.indicator(mesh, np.arange(8)))
    assert first.lam == pytest.approx(second.lam, rel=1e-9)


def test_power_homogeneity_of_start(quadratic):
    """Test that rescaling the start does not change the result."""
    mesh = build_unit_square(4)
    start = np.random.default_rng(2).uniform(0.2, 1.0, mesh.n_vertices)
    phi = DesignDensity.uniform(mesh, 0.5)
    small = solve_state(quadratic, quadratic, mesh, 5.0, phi, u0=start)
    large = solve_state(quadratic, quadratic, mesh, 5.0, phi, u0=7.0 * start)
    assert small.lam == pytest.approx(large.lam, rel=1e-8)


def test_generalized_eigenvalue_on_two_cells(quadratic):
    """Test the solver and the residual report against dense linear algebra on two cells."""
    mesh = build_unit_square(1)
    phi = np.array([1.0, 0.0])
    A, B = dense_forms(quadratic, mesh, 3.0, phi)

    pair = solve_state(quadratic, quadratic, mesh, 3.0, phi)
    assert pair.lam == pytest.approx(linalg.eigh(A, B, eigvals_only=True)[0], rel=1e-9)

    u = np.array([1.0, 2.0, 3.0, 4.0])
    grad_I, grad_J = 2.0 * A @ u, 2.0 * B @ u
    mu = np.dot(grad_I, grad_J) / np.dot(grad_J, grad_J)
    report = el_residual_report(quadratic, quadratic, mesh, 3.0, phi, u)
    assert report["lambda"] == pytest.approx(u @ A @ u / (u @ B @ u), rel=1e-12)
    assert report["multiplier"] == pytest.approx(mu, rel=1e-12)
    np.testing.assert_allclose(report["residual_vector"], grad_I - mu * grad_J, atol=1e-12)


def test_residual_report_at_solution(quadratic):
    """Test the converged residual and the multiplier identity for power laws."""
    mesh = build_unit_disk(3)
    phi = DesignDensity.uniform(mesh, mesh.area / 4)
    pair = solve_state(quadratic, quadratic, mesh, 10.0, phi)
    report = el_residual_report(quadratic, quadratic, mesh, 10.0, phi, pair)
    assert report["admissible"]
    assert report["relative_residual"] < 1e-6
    assert report["multiplier"] == pytest.approx(pair.lam, rel=1e-6)
    assert report["pairing_gap"] < 1e-6
    assert list(report["per_node"].columns) == ["vertex_id", "residual", "lambda_residual"]


def test_residual_report_rejects_zero_trace(quadratic):
    """Test that a zero-trace field is reported as outside the admissible class."""
    mesh = build_unit_square(2)
    report = el_residual_report(quadratic, quadratic, mesh, 0.0, 0.0, np.zeros(mesh.n_vertices))
    assert not report["admissible"]
    assert "zero trace" in report["reason"]


def test_positivity(quadratic):
    """Test that the minimizer is strictly positive without a hole."""
    mesh = build_unit_disk(3)
    report = positivity_report(mesh, solve_state(quadratic, quadratic, mesh, 1.0, 0.5))
    assert report["nonnegative"]
    assert report["strictly_positive"]


def test_hole_state_against_bessel(quadratic):
    """Test the Dirichlet hole r < 1/2 against the Bessel closed form."""
    mesh = build_unit_disk(8)
    hole = locate_cells_by_predicate(mesh, lambda x, y: np.hypot(x, y) < 0.5)
    pair = solve_hole_state(quadratic, quadratic, mesh, hole)
    assert pair.converged
    assert np.all(pair.u.values[pair.pinned] == 0.0)
    assert pair.lam == pytest.approx(bessel_hole_eigenvalue(0.5), rel=3e-2)
    assert positivity_report(mesh, pair)["strictly_positive"]


def test_hole_covering_boundary_is_refused(quadratic):
    """Test that a hole touching every boundary vertex leaves no admissible field."""
    mesh = build_unit_square(3)
    with pytest.raises(NotProjectableError):
        solve_hole_state(quadratic, quadratic, mesh, np.arange(mesh.n_cells))


def test_set_state_increases_with_alpha(quadratic):
    """Test lambda(alpha, E) is non-decreasing in alpha."""
    mesh = build_unit_square(4)
    cells = locate_cells_by_predicate(mesh, lambda x, y: (x > 0.25) & (x < 0.75) & (y > 0.25) & (y < 0.75))
    values = [solve_set_state(quadratic, quadratic, mesh, a, cells).lam for a in (0.0, 1.0, 10.0)]
    assert values[0] <= values[1] <= values[2]


@pytest.mark.parametrize("alpha,expected", [(100.0, 1.544902), (1000.0, 2.156809)])
def test_set_state_at_large_weight(quadratic, alpha, expected):
    """Test that a large weight drives u to zero on the box and the solve still converges."""
    mesh = build_unit_square(4)
    cells = locate_cells_by_predicate(mesh, lambda x, y: (x > 0.25) & (x < 0.75) & (y > 0.25) & (y < 0.75))
    pair = solve_set_state(quadratic, quadratic, mesh, alpha, cells)
    assert pair.converged, pair.status
    assert pair.el_residual < 1e-6
    assert pair.lam == pytest.approx(expected, rel=1e-4)
    u = pair.u.values
    assert u.min() == 0.0

    phi = np.zeros(mesh.n_cells)
    phi[cells] = 1.0
    report = el_residual_report(quadratic, quadratic, mesh, alpha, phi, pair)
    assert report["active_vertices"] > 0
    assert report["relative_residual"] < 1e-6
    # where u = 0 the full gradient may only push u below zero
    full = energy_gradient(quadratic, mesh, alpha, phi, u) \
        - report["multiplier"] * trace_gradient(quadratic, mesh, u)
    assert np.all(full[u == 0.0] >= -1e-6)


def test_large_weight_stays_below_hole_value(quadratic):
    """Test Lambda(100, E) < Lambda(1000, E) <= lambda(infinity, E) for the centre box."""
    mesh = build_unit_square(4)
    cells = locate_cells_by_predicate(mesh, lambda x, y: (x > 0.25) & (x < 0.75) & (y > 0.25) & (y < 0.75))
    low, high = (solve_set_state(quadratic, quadratic, mesh, a, cells).lam for a in (100.0, 1000.0))
    hole = solve_hole_state(quadratic, quadratic, mesh, cells)
    assert low < high <= hole.lam * (1.0 + 1e-9)


def test_multi_start_agreement(quadratic):
    """Test that random starts reach the same eigenvalue."""
    mesh = build_unit_square(3)
    report = multi_start_check(quadratic, quadratic, mesh, 1.0, DesignDensity.uniform(mesh, 0.5), n_starts=3)
    assert report["all_converged"]
    assert report["max_deviation"] < 1e-6


def test_solver_options_validation():
    """Test that out-of-range and unknown options are refused."""
    with pytest.raises(ValidationError):
        SolverOptions(armijo_slope=2.0)
    with pytest.raises(ValidationError):
        SolverOptions(tolerance=1e-3)
    assert SolverOptions(max_iterations=10).max_iterations == 10
