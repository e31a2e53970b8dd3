#!/usr/bin/env python3
"""
Test Modulars
Discrete modulars, assembled gradients, norms and the field/density containers
"""

import sys
import os

import numpy as np
import pandas as pd
import pytest

# Add the current directory to path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from steklov_design_core.exceptions import AdmissibilityError, ConfigurationError
from steklov_design_core.mesh import build_unit_disk, build_unit_square
from steklov_design_core.modular import (DesignDensity, NodalField, bulk_modular, bulk_norm,
                                         cell_modular, energy, energy_gradient, gradient_modular,
                                         rayleigh_quotient, sobolev_modular, sobolev_norm,
                                         trace_gradient, trace_modular, trace_norm, weighted_modular)
from steklov_design_core.young import make_young

FAMILIES = [
    ("power", {"p": 2.0}),
    ("power", {"p": 3.0}),
    ("power_log", {"p": 2.0}),
    ("power_sum", {"p": 2.0, "q": 4.0}),
]


@pytest.fixture
def quadratic():
    return make_young("power", {"p": 2})


@pytest.fixture
def square():
    return build_unit_square(4)


def test_bulk_modular_of_linear_field(quadratic, square):
    """Test the integral of x^2 over the square."""
    u = NodalField.from_function(square, lambda x, y: x)
    assert bulk_modular(quadratic, square, u) == pytest.approx(1.0 / 3.0, rel=1e-13)
    assert cell_modular(quadratic, square, u).sum() == pytest.approx(1.0 / 3.0, rel=1e-13)


def test_gradient_modular_of_linear_field(quadratic, square):
    """Test |grad(x + 2y)|^2 = 5 integrated over the unit square."""
    u = NodalField.from_function(square, lambda x, y: x + 2.0 * y)
    assert gradient_modular(quadratic, square, u) == pytest.approx(5.0, rel=1e-13)


def test_trace_modular_of_linear_field(quadratic, square):
    """Test the boundary integral of x^2: 1/3 on the top and bottom, 1 on the right side."""
    u = NodalField.from_function(square, lambda x, y: x)
    assert trace_modular(quadratic, square, u) == pytest.approx(5.0 / 3.0, rel=1e-13)


def test_trace_modular_of_constant_on_disk(quadratic):
    """Test that a unit constant measures the polygon perimeter."""
    mesh = build_unit_disk(4)
    assert trace_modular(quadratic, mesh, NodalField.constant(mesh, 1.0)) == pytest.approx(
        mesh.boundary_length, rel=1e-13)


def test_energy_of_constant(quadratic, square):
    """Test I(1) = |domain| + alpha * volume for an indicator weight."""
    phi = DesignDensity.indicator(square, np.arange(8))
    u = NodalField.constant(square, 1.0)
    expected = 1.0 + 3.0 * phi.volume(square)
    assert energy(quadratic, square, 3.0, phi, u) == pytest.approx(expected, rel=1e-13)
    assert weighted_modular(quadratic, square, phi, u) == pytest.approx(phi.volume(square), rel=1e-13)
    assert sobolev_modular(quadratic, square, u) == pytest.approx(1.0, rel=1e-13)


def test_energy_rejects_negative_alpha(quadratic, square):
    """Test that a negative weight is a configuration error."""
    with pytest.raises(ConfigurationError):
        energy(quadratic, square, -1.0, 0.0, np.ones(square.n_vertices))


def test_rayleigh_quotient(quadratic, square):
    """Test I/J of the constant field and the zero-trace rejection."""
    u = NodalField.constant(square, 1.0)
    assert rayleigh_quotient(quadratic, quadratic, square, 0.0, 0.0, u) == pytest.approx(0.25, rel=1e-13)
    with pytest.raises(AdmissibilityError):
        rayleigh_quotient(quadratic, quadratic, square, 0.0, 0.0, np.zeros(square.n_vertices))


@pytest.mark.parametrize("family,params", FAMILIES)
def test_energy_gradient_matches_finite_differences(family, params):
    """Test <I'(u), v> against central differences for 50 random positive pairs."""
    Y = make_young(family, params)
    mesh = build_unit_square(4)
    rng = np.random.default_rng(11)
    phi = rng.uniform(size=mesh.n_cells)
    h = 1e-5
    for _ in range(50):
        u = rng.uniform(0.5, 1.5, mesh.n_vertices)
        v = rng.normal(size=mesh.n_vertices)
        grad = energy_gradient(Y, mesh, 2.0, phi, u)
        analytic = float(np.dot(grad, v))
        numeric = (energy(Y, mesh, 2.0, phi, u + h * v) - energy(Y, mesh, 2.0, phi, u - h * v)) / (2 * h)
        scale = max(abs(analytic), 1e-3 * np.linalg.norm(grad) * np.linalg.norm(v))
        assert abs(numeric - analytic) <= 1e-5 * scale


@pytest.mark.parametrize("family,params", FAMILIES)
def test_trace_gradient_matches_finite_differences(family, params):
    """Test <J'(u), v> against central differences on the disk."""
    Y = make_young(family, params)
    mesh = build_unit_disk(3)
    rng = np.random.default_rng(5)
    h = 1e-5
    for _ in range(50):
        u = rng.uniform(0.5, 1.5, mesh.n_vertices)
        v = rng.normal(size=mesh.n_vertices)
        grad = trace_gradient(Y, mesh, u)
        analytic = float(np.dot(grad, v))
        numeric = (trace_modular(Y, mesh, u + h * v) - trace_modular(Y, mesh, u - h * v)) / (2 * h)
        scale = max(abs(analytic), 1e-3 * np.linalg.norm(grad) * np.linalg.norm(v))
        assert abs(numeric - analytic) <= 1e-5 * scale


def test_trace_gradient_vanishes_inside(quadratic, square):
    """Test that J' is supported on boundary vertices."""
    grad = trace_gradient(quadratic, square, np.ones(square.n_vertices))
    interior = np.setdiff1d(np.arange(square.n_vertices), square.boundary_vertices)
    assert np.all(grad[interior] == 0.0)
    assert grad.sum() == pytest.approx(2.0 * square.boundary_length, rel=1e-13)


def test_norms_of_constant(quadratic, square):
    """Test the Luxemburg norms of the unit constant on the square."""
    u = NodalField.constant(square, 1.0)
    assert bulk_norm(quadratic, square, u) == pytest.approx(1.0, rel=1e-9)
    assert sobolev_norm(quadratic, square, u) == pytest.approx(1.0, rel=1e-9)
    assert trace_norm(quadratic, square, u) == pytest.approx(2.0, rel=1e-9)


def test_nodal_field_validation(square):
    """Test rejection of non-finite values and wrong lengths."""
    with pytest.raises(ConfigurationError):
        NodalField(np.array([0.0, np.nan]))
    with pytest.raises(ConfigurationError):
        NodalField(np.zeros(3)).check_mesh(square)


def test_design_density_bounds_and_volume(square):
    """Test the [0, 1] range, the uniform constructor and the cell partitions."""
    with pytest.raises(AdmissibilityError):
        DesignDensity(np.array([0.5, 1.2]))
    with pytest.raises(ConfigurationError):
        DesignDensity.uniform(square, 2.0)

    phi = DesignDensity.uniform(square, 0.3)
    assert phi.volume(square) == pytest.approx(0.3, rel=1e-13)
    assert len(phi.fractional_cells()) == square.n_cells

    values = np.zeros(square.n_cells)
    values[:3] = 1.0
    values[3] = 0.5
    mixed = DesignDensity(values)
    assert mixed.full_cells().tolist() == [0, 1, 2]
    assert mixed.fractional_cells().tolist() == [3]
    assert mixed.support().tolist() == [0, 1, 2, 3]


def test_frames_are_sorted_by_id(square):
    """Test that shuffled CSV rows are read back in id order."""
    phi = DesignDensity(np.linspace(0.0, 1.0, square.n_cells))
    frame = phi.to_frame().sample(frac=1.0, random_state=0)
    np.testing.assert_array_equal(DesignDensity.from_frame(frame).values, phi.values)

    u = NodalField(np.arange(5, dtype=float))
    assert list(u.to_frame().columns) == ["vertex_id", "value"]
    restored = NodalField.from_frame(pd.DataFrame({"vertex_id": [2, 0, 1], "value": [2.0, 0.0, 1.0]}))
    np.testing.assert_array_equal(restored.values, [0.0, 1.0, 2.0])
    assert len(restored) == 3
