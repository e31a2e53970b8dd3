#!/usr/bin/env python3
"""
Test Radial Reference Values
Shooting integration against the modified Bessel closed forms
"""

import sys
import os
import math

import pytest

# Add the current directory to path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from steklov_design_core.exceptions import ConfigurationError
from steklov_design_core.oracles import (bessel_hole_eigenvalue, bessel_steklov_ratio,
                                         bessel_two_phase_eigenvalue, hole_radius_for_area,
                                         radial_shooting_eigenvalue)


def test_steklov_ratio_value():
    """Test I1(1)/I0(1) to five digits."""
    assert bessel_steklov_ratio() == pytest.approx(0.44639, abs=1e-5)


def test_shooting_without_weight():
    """Test the regular start against the Bessel ratio."""
    assert radial_shooting_eigenvalue() == pytest.approx(bessel_steklov_ratio(), rel=1e-8)


@pytest.mark.parametrize("hole_radius", [0.1, 0.5, 0.8])
def test_shooting_with_hole(hole_radius):
    """Test the Dirichlet start at r0 against I0/K0 combinations."""
    assert radial_shooting_eigenvalue(hole_radius=hole_radius) == pytest.approx(
        bessel_hole_eigenvalue(hole_radius), rel=1e-8)


@pytest.mark.parametrize("alpha,radius", [(1.0, 0.5), (10.0, 0.3), (100.0, 0.7)])
def test_shooting_with_weight_jump(alpha, radius):
    """Test the piecewise integration across the weight interface."""
    assert radial_shooting_eigenvalue(alpha=alpha, radius=radius) == pytest.approx(
        bessel_two_phase_eigenvalue(alpha, radius), rel=1e-8)


def test_two_phase_limits():
    """Test that the weighted value lies between the unweighted and fully weighted ones."""
    full = bessel_two_phase_eigenvalue(10.0, 1.0)
    assert full == pytest.approx(radial_shooting_eigenvalue(alpha=10.0, radius=2.0), rel=1e-8)
    assert bessel_steklov_ratio() < bessel_two_phase_eigenvalue(10.0, 0.5) < full
    assert bessel_two_phase_eigenvalue(0.0, 0.5) == bessel_steklov_ratio()


def test_weight_increases_towards_hole_value():
    """Test that a large weight on r < 1/2 approaches the hole value from below."""
    hole = bessel_hole_eigenvalue(0.5)
    values = [bessel_two_phase_eigenvalue(a, 0.5) for a in (1.0, 100.0, 1e4)]
    assert values[0] < values[1] < values[2] < hole
    assert hole - values[2] < 0.05 * hole


def test_hole_value_increases_with_radius():
    """Test that a larger hole gives a larger value."""
    assert bessel_hole_eigenvalue(0.2) < bessel_hole_eigenvalue(0.4) < bessel_hole_eigenvalue(0.6)


def test_invalid_arguments():
    """Test range checks."""
    with pytest.raises(ConfigurationError):
        bessel_hole_eigenvalue(1.0)
    with pytest.raises(ConfigurationError):
        bessel_two_phase_eigenvalue(-1.0, 0.5)
    with pytest.raises(ConfigurationError):
        radial_shooting_eigenvalue(hole_radius=1.0)
    with pytest.raises(ConfigurationError):
        hole_radius_for_area(math.pi)
    assert hole_radius_for_area(math.pi / 4) == pytest.approx(0.5)
