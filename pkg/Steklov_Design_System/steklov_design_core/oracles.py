"""
Radial Reference Values
Closed-form and shooting values of the quadratic Steklov problem on the unit
disk, used to benchmark the finite element solvers
"""

import logging
import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import i0, i1, k0, k1

from .exceptions import ConfigurationError

logger = logging.getLogger(__name__)

SERIES_START = 1e-6


def bessel_steklov_ratio() -> float:
    """First Steklov value for -div grad u + u = 0 on the unit disk: I1(1) / I0(1)."""
    return float(i1(1.0) / i0(1.0))


def bessel_hole_eigenvalue(hole_radius: float) -> float:
    """
    Same problem with u = 0 on the centred disk of radius r0.

    The radial solution is I0(r) K0(r0) - K0(r) I0(r0).
    """
    if not 0.0 < hole_radius < 1.0:
        raise ConfigurationError(f"Hole radius must lie in (0, 1), got {hole_radius}")
    r0 = hole_radius
    numerator = i1(1.0) * k0(r0) + k1(1.0) * i0(r0)
    denominator = i0(1.0) * k0(r0) - k0(1.0) * i0(r0)
    return float(numerator / denominator)


def bessel_two_phase_eigenvalue(alpha: float, radius: float) -> float:
    """
    Weight 1 + alpha on the centred disk of the given radius, 1 outside.

    Inside the solution is I0(k r) with k = sqrt(1 + alpha); outside it is
    B I0(r) + C K0(r), matched in value and slope at the interface.
    """
    if alpha < 0:
        raise ConfigurationError(f"alpha must be nonnegative, got {alpha}")
    if not 0.0 <= radius <= 1.0:
        raise ConfigurationError(f"Weighted radius must lie in [0, 1], got {radius}")
    if radius == 0.0 or alpha == 0.0:
        return bessel_steklov_ratio()
    k = math.sqrt(1.0 + alpha)
    if radius == 1.0:
        return float(k * i1(k) / i0(k))

    value, slope = i0(k * radius), k * i1(k * radius)
    matrix = np.array([[i0(radius), k0(radius)], [i1(radius), -k1(radius)]])
    b, c = np.linalg.solve(matrix, np.array([value, slope]))
    return float((b * i1(1.0) - c * k1(1.0)) / (b * i0(1.0) + c * k0(1.0)))


def radial_shooting_eigenvalue(alpha: float = 0.0,
                               radius: float = 0.0,
                               hole_radius: float = 0.0,
                               rtol: float = 1e-11) -> float:
    """
    Integrate u'' + u'/r = w(r) u outward and return u'(1) / u(1).

    w = 1 + alpha on r < radius and 1 elsewhere. Without a hole the start is
    the regular series u = 1 + w r^2 / 4 near the centre; with a hole the
    start is u(r0) = 0, u'(r0) = 1.
    """
    if alpha < 0:
        raise ConfigurationError(f"alpha must be nonnegative, got {alpha}")
    if not 0.0 <= hole_radius < 1.0:
        raise ConfigurationError(f"Hole radius must lie in [0, 1), got {hole_radius}")

    def weight(r: float) -> float:
        return 1.0 + alpha if r < radius else 1.0

    if hole_radius > 0.0:
        start = hole_radius
        state = np.array([0.0, 1.0])
    else:
        start = SERIES_START
        w0 = weight(0.0)
        state = np.array([1.0 + w0 * start ** 2 / 4.0, w0 * start / 2.0])

    # integrate piecewise so the weight jump falls on a segment end
    breaks = [start] + [r for r in (radius,) if start < r < 1.0] + [1.0]
    for left, right in zip(breaks[:-1], breaks[1:]):
        w = weight(0.5 * (left + right))

        def rhs(r, y, w=w):
            return [y[1], w * y[0] - y[1] / r]

        solution = solve_ivp(rhs, (left, right), state, method="DOP853", rtol=rtol, atol=1e-14)
        if not solution.success:
            raise ConfigurationError(f"Radial integration failed: {solution.message}")
        state = solution.y[:, -1]

    value = float(state[1] / state[0])
    logger.debug(f"Radial shooting alpha={alpha} radius={radius} hole={hole_radius}: {value:.12g}")
    return value


def hole_radius_for_area(area: float) -> float:
    """Radius of the centred disk with the given area."""
    if not 0.0 <= area < math.pi:
        raise ConfigurationError(f"Hole area must lie in [0, pi), got {area}")
    return math.sqrt(area / math.pi)
