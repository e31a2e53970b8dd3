#!/usr/bin/env python3
"""
Test Young Functions
Families, exponent windows, conjugates, inverses and norms
"""

import sys
import os

import numpy as np
import pytest

# Add the current directory to path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from steklov_design_core.exceptions import ConfigurationError
from steklov_design_core.young import (YoungFamily, check_young_properties, conjugate,
                                       conjugate_exponent_window, inverse_G, is_slower_growth,
                                       luxemburg_norm, make_custom_young, make_young,
                                       sobolev_conjugate_inverse, verify_exponent_window)

BUILT_INS = [
    ("power", {"p": 2.0}),
    ("power", {"p": 3.0}),
    ("power_log", {"p": 2.0}),
    ("power_sum", {"p": 2.0, "q": 4.0}),
]


def test_power_family():
    """Test the quadratic law and its declared window."""
    Y = make_young("power", {"p": 2})
    assert Y.family is YoungFamily.POWER
    assert Y(3.0) == pytest.approx(9.0)
    assert Y.density(3.0) == pytest.approx(6.0)
    assert (Y.p_minus, Y.p_plus) == (2.0, 2.0)


@pytest.mark.parametrize("family,params", [
    ("power", {"p": 1.0}),
    ("power_log", {"p": 0.5}),
    ("power_sum", {"p": 2.0, "q": 2.0}),
    ("power_sum", {"p": 2.0}),
    ("cubic", {"p": 2.0}),
])
def test_invalid_parameters_rejected(family, params):
    """Test that exponents at or below one and bad families are refused."""
    with pytest.raises(ConfigurationError):
        make_young(family, params)


def test_power_log_window_from_grid():
    """Test that t g / G for t^2 log(1+t) stays inside [2, 3] and reaches near 3."""
    Y = make_young("power_log", {"p": 2})
    report = verify_exponent_window(Y)
    assert report["passed"]
    assert (Y.p_minus, Y.p_plus) == (2.0, 3.0)
    assert report["min_ratio"] >= 2.0
    assert report["max_ratio"] <= 3.0
    assert report["max_ratio"] > 2.99


def test_power_sum_window_from_grid():
    """Test the grid window of t^2 + t^4."""
    report = verify_exponent_window(make_young("power_sum", {"p": 2, "q": 4}))
    assert report["passed"]
    assert report["min_ratio"] == pytest.approx(2.0, abs=1e-3)
    assert report["max_ratio"] == pytest.approx(4.0, abs=1e-3)


def test_exponent_grid_must_be_wide():
    """Test that a narrow grid cannot certify a window."""
    with pytest.raises(ConfigurationError):
        verify_exponent_window(make_young("power", {"p": 2}), np.logspace(-2, 2, 50))


def test_custom_young_checked_against_window():
    """Test that a custom law with a wrong window is refused."""
    G = lambda t: np.asarray(t) ** 3
    g = lambda t: 3.0 * np.asarray(t) ** 2
    Y = make_custom_young(G, g, 3.0, 3.0)
    assert Y.family is YoungFamily.CUSTOM
    with pytest.raises(ConfigurationError):
        make_custom_young(G, g, 2.0, 2.5)


@pytest.mark.parametrize("family,params", BUILT_INS)
def test_property_suite_passes(family, params):
    """Test the full property suite on 1000 random samples per family."""
    Y = make_young(family, params)
    report = check_young_properties(Y, n_samples=1000, rng=np.random.default_rng(7))
    failed = [k for k, v in report.items() if isinstance(v, dict) and not v.get("passed", True)]
    assert report["passed"], failed


def test_quadratic_conjugate_closed_form():
    """Test that the conjugate of t^2 is t^2 / 4 with maximiser t / 2."""
    Y = make_young("power", {"p": 2})
    for t in (0.0, 0.5, 2.0, 10.0):
        assert conjugate(Y, t) == pytest.approx(t * t / 4.0, rel=1e-12, abs=1e-300)
        assert Y.conjugate.maximiser(t) == pytest.approx(t / 2.0, rel=1e-12, abs=1e-300)


def test_conjugate_window():
    """Test the conjugate exponent window of t^2 + t^4."""
    lower, upper = conjugate_exponent_window(make_young("power_sum", {"p": 2, "q": 4}))
    assert lower == pytest.approx(4.0 / 3.0)
    assert upper == pytest.approx(2.0)


def test_conjugate_rejects_negative_argument():
    """Test that negative arguments are refused."""
    with pytest.raises(ConfigurationError):
        conjugate(make_young("power", {"p": 2}), -1.0)


@pytest.mark.parametrize("family,params", BUILT_INS)
def test_inverse_round_trip(family, params):
    """Test G^{-1}(G(t)) = t over twelve decades."""
    Y = make_young(family, params)
    for t in np.logspace(-6, 6, 25):
        assert inverse_G(Y, float(Y(t))) == pytest.approx(t, rel=1e-10)
    assert inverse_G(Y, 0.0) == 0.0


def test_luxemburg_norm_quadratic():
    """Test that the Luxemburg norm of the discrete quadratic modular is the Euclidean norm."""
    norm = luxemburg_norm(lambda v: float(np.sum(v ** 2)), np.array([3.0, 4.0]), 2.0, 2.0)
    assert norm == pytest.approx(5.0, rel=1e-9)


def test_luxemburg_norm_is_homogeneous():
    """Test ||2u|| = 2||u|| for a non-homogeneous modular."""
    Y = make_young("power_log", {"p": 2})
    modular = lambda v: float(np.sum(Y(np.abs(v))))
    u = np.array([0.3, 1.7, 2.2])
    single = luxemburg_norm(modular, u, Y.p_minus, Y.p_plus)
    double = luxemburg_norm(modular, 2.0 * u, Y.p_minus, Y.p_plus)
    assert double == pytest.approx(2.0 * single, rel=1e-8)
    assert modular(u / single) == pytest.approx(1.0, rel=1e-8)


def test_slower_growth():
    """Test that t^2 grows more slowly than t^4 but not the reverse."""
    quadratic = make_young("power", {"p": 2})
    quartic = make_young("power", {"p": 4})
    assert is_slower_growth(quadratic, quartic)
    assert not is_slower_growth(quartic, quadratic)
    assert not is_slower_growth(quadratic, quadratic)


def test_sobolev_conjugate_subcritical():
    """Test t^1.5 in the plane: the integral converges at 0 and diverges at infinity."""
    report = sobolev_conjugate_inverse(make_young("power", {"p": 1.5}), n=2, t=1.0)
    assert report["cond1_satisfied"]
    # integral of s^(-5/6) over (0, 1)
    assert report["value"] == pytest.approx(6.0, rel=1e-6)


def test_sobolev_conjugate_critical_exponent():
    """Test that p = n gives a divergent integral at 0."""
    report = sobolev_conjugate_inverse(make_young("power", {"p": 2}), n=2, t=1.0)
    assert not report["converges_at_zero"]
    assert report["value"] == float("inf")
