"""
Young Function Calculus
Evaluation, conjugation, inversion and exponent checks for Orlicz growth laws
"""

import logging
import math
import threading
from enum import Enum
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, optimize

from .exceptions import ConfigurationError, ConvergenceError

logger = logging.getLogger(__name__)

ArrayFunction = Callable[[np.ndarray], np.ndarray]

EXPONENT_TOLERANCE = 1e-8
MAX_BRACKET_DOUBLINGS = 200
_BRENT_RTOL = 1e-14


class YoungFamily(Enum):
    """Built-in growth law families."""
    POWER = "power"
    POWER_LOG = "power_log"
    POWER_SUM = "power_sum"
    CUSTOM = "custom"


class YoungFunction:
    """
    A growth law G(t) = integral of its density g over [0, t].

    This class:
    - Evaluates G and g on scalars or arrays of nonnegative abscissae
    - Carries the declared exponent window (p_minus, p_plus)
    - Owns a lazily built, memoised conjugate function

    Instances are immutable after construction and safe to share.
    """

    def __init__(self,
                 G: ArrayFunction,
                 g: ArrayFunction,
                 p_minus: float,
                 p_plus: float,
                 family: YoungFamily = YoungFamily.CUSTOM,
                 params: Optional[Dict[str, float]] = None):
        self._G = G
        self._g = g
        self.p_minus = float(p_minus)
        self.p_plus = float(p_plus)
        self.family = family
        self.params = dict(params or {})
        self._conjugate: Optional["ConjugateFunction"] = None
        self._lock = threading.Lock()

    def __call__(self, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        return self._G(np.asarray(t, dtype=float))

    def density(self, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """Evaluate g(t)."""
        return self._g(np.asarray(t, dtype=float))

    @property
    def is_power(self) -> bool:
        return self.family is YoungFamily.POWER

    @property
    def conjugate(self) -> "ConjugateFunction":
        with self._lock:
            if self._conjugate is None:
                self._conjugate = ConjugateFunction(self)
            return self._conjugate

    def describe(self) -> Dict[str, Any]:
        """Machine-readable description used in run summaries."""
        return {
            "family": self.family.value,
            "params": dict(sorted(self.params.items())),
            "p_minus": self.p_minus,
            "p_plus": self.p_plus,
        }

    def __repr__(self) -> str:
        return (f"YoungFunction(family={self.family.value}, params={self.params}, "
                f"window=({self.p_minus}, {self.p_plus}))")


class ConjugateFunction:
    """
    Complementary function sup_s {s*t - G(s)} of a Young function.

    The supremum is attained where g(s) = t; that abscissa is found by a
    bracketed root search on the non-decreasing density and cached per t.
    """

    def __init__(self, source: YoungFunction):
        self.source = source
        self._cache: Dict[float, Tuple[float, float]] = {}
        self._lock = threading.Lock()

    def maximiser(self, t: float) -> float:
        """Return s* with g(s*) = t."""
        return self._evaluate(t)[0]

    def __call__(self, t: float) -> float:
        return self._evaluate(t)[1]

    def _evaluate(self, t: float) -> Tuple[float, float]:
        t = float(t)
        if t < 0:
            raise ConfigurationError(f"Conjugate is defined for t >= 0, got {t}")
        with self._lock:
            cached = self._cache.get(t)
        if cached is not None:
            return cached

        if t == 0.0:
            result = (0.0, 0.0)
        else:
            g = self.source.density
            lo, hi = 0.0, 1.0
            doublings = 0
            while g(hi) < t:
                lo, hi = hi, 2.0 * hi
                doublings += 1
                if doublings > MAX_BRACKET_DOUBLINGS:
                    raise ConvergenceError(
                        f"Conjugate bracket for t={t} not found after {MAX_BRACKET_DOUBLINGS} doublings"
                    )
            s_star = optimize.brentq(lambda s: float(g(s)) - t, lo, hi,
                                     xtol=1e-300, rtol=_BRENT_RTOL)
            result = (s_star, s_star * t - float(self.source(s_star)))

        with self._lock:
            self._cache[t] = result
        return result


def _power(p: float) -> Tuple[ArrayFunction, ArrayFunction]:
    return (lambda t: t ** p,
            lambda t: p * t ** (p - 1.0))


def _power_log(p: float) -> Tuple[ArrayFunction, ArrayFunction]:
    return (lambda t: t ** p * np.log1p(t),
            lambda t: p * t ** (p - 1.0) * np.log1p(t) + t ** p / (1.0 + t))


def _power_sum(p: float, q: float) -> Tuple[ArrayFunction, ArrayFunction]:
    return (lambda t: t ** p + t ** q,
            lambda t: p * t ** (p - 1.0) + q * t ** (q - 1.0))


def make_young(family: Union[str, YoungFamily], params: Dict[str, float]) -> YoungFunction:
    """
    Instantiate a built-in Young function.

    Args:
        family: "power", "power_log" or "power_sum"
        params: {"p": ...} and, for power_sum, {"q": ...}

    Returns:
        YoungFunction with its analytic exponent window
    """
    try:
        family = YoungFamily(family)
    except ValueError as exc:
        raise ConfigurationError(f"Unknown Young family: {family}") from exc

    if "p" not in params:
        raise ConfigurationError(f"Family {family.value} requires parameter p")
    p = float(params["p"])
    if not p > 1.0:
        raise ConfigurationError(f"Exponent p must exceed 1, got p={p}")

    if family is YoungFamily.POWER:
        G, g = _power(p)
        return YoungFunction(G, g, p, p, family, {"p": p})

    if family is YoungFamily.POWER_LOG:
        # t g / G = p + t / ((1 + t) log(1 + t)), which runs from p + 1 at 0 down to p
        G, g = _power_log(p)
        return YoungFunction(G, g, p, p + 1.0, family, {"p": p})

    if family is YoungFamily.POWER_SUM:
        if "q" not in params:
            raise ConfigurationError("Family power_sum requires parameter q")
        q = float(params["q"])
        if not q > p:
            raise ConfigurationError(f"power_sum requires 1 < p < q, got p={p}, q={q}")
        G, g = _power_sum(p, q)
        return YoungFunction(G, g, p, q, family, {"p": p, "q": q})

    raise ConfigurationError("Custom families are built with make_custom_young")


def make_custom_young(G: ArrayFunction,
                      g: ArrayFunction,
                      p_minus: float,
                      p_plus: float,
                      grid: Optional[np.ndarray] = None) -> YoungFunction:
    """
    Wrap a user-supplied growth law after checking its exponent window.

    The density must be given explicitly; G is never differentiated numerically.
    """
    if not 1.0 < p_minus <= p_plus < math.inf:
        raise ConfigurationError(f"Invalid exponent window ({p_minus}, {p_plus})")
    young = YoungFunction(G, g, p_minus, p_plus, YoungFamily.CUSTOM)
    report = verify_exponent_window(young, grid)
    if not report["passed"]:
        raise ConfigurationError(
            f"Custom Young function violates its window: ratio range "
            f"[{report['min_ratio']:.6g}, {report['max_ratio']:.6g}]"
        )
    return young


def default_grid(decades: Tuple[float, float] = (-6.0, 6.0), points_per_decade: int = 200) -> np.ndarray:
    lo, hi = decades
    return np.logspace(lo, hi, int((hi - lo) * points_per_decade) + 1)


def verify_exponent_window(Y: YoungFunction,
                           grid: Optional[np.ndarray] = None,
                           tolerance: float = EXPONENT_TOLERANCE) -> Dict[str, Any]:
    """
    Check p_minus <= t g(t) / G(t) <= p_plus on a grid of positive abscissae.

    Args:
        Y: Young function to check
        grid: positive abscissae spanning at least ten decades
        tolerance: slack added on both sides of the window

    Returns:
        Report with the observed ratio range and offending grid points
    """
    t = default_grid() if grid is None else np.asarray(grid, dtype=float)
    if np.any(t <= 0):
        raise ConfigurationError("Exponent grid must be strictly positive")
    if math.log10(t.max() / t.min()) < 10.0 - 1e-9:
        raise ConfigurationError("Exponent grid must span at least ten decades")

    G_values = np.asarray(Y(t), dtype=float)
    g_values = np.asarray(Y.density(t), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(G_values > 0, t * g_values / G_values, np.nan)

    lower = max(Y.p_minus, 1.0)
    bad = ~np.isfinite(ratio) | (ratio < lower - tolerance) | (ratio > Y.p_plus + tolerance)
    finite = ratio[np.isfinite(ratio)]
    report = {
        "family": Y.family.value,
        "p_minus": Y.p_minus,
        "p_plus": Y.p_plus,
        "min_ratio": float(finite.min()) if finite.size else float("nan"),
        "max_ratio": float(finite.max()) if finite.size else float("nan"),
        "violations": int(bad.sum()),
        "first_violations": t[bad][:10].tolist(),
        "passed": bool(not bad.any()),
    }
    if not report["passed"]:
        logger.warning(f"Exponent window check failed for {Y!r}: {report['violations']} grid points")
    return report


def growth_bracket(ratio: float, p_minus: float, p_plus: float) -> Tuple[float, float]:
    """Bracket x with x**p ~ ratio for some p in the window, widened by a safety factor."""
    candidates = (ratio ** (1.0 / p_minus), ratio ** (1.0 / p_plus))
    return 0.5 * min(candidates), 2.0 * max(candidates)


def inverse_G(Y: YoungFunction, y: float) -> float:
    """
    Solve G(t) = y for t >= 0.

    The bracket comes from the growth sandwich around t = 1 and is widened
    until it changes sign.
    """
    y = float(y)
    if y < 0:
        raise ConfigurationError(f"inverse_G requires y >= 0, got {y}")
    if y == 0.0:
        return 0.0

    lo, hi = growth_bracket(y / float(Y(1.0)), Y.p_minus, Y.p_plus)
    for _ in range(MAX_BRACKET_DOUBLINGS):
        if float(Y(lo)) <= y:
            break
        lo *= 0.5
    for _ in range(MAX_BRACKET_DOUBLINGS):
        if float(Y(hi)) >= y:
            break
        hi *= 2.0
    return optimize.brentq(lambda t: float(Y(t)) - y, lo, hi, xtol=1e-300, rtol=_BRENT_RTOL)


def conjugate(Y: YoungFunction, t: float) -> float:
    """Evaluate the complementary function at t."""
    return Y.conjugate(t)


def conjugate_exponent_window(Y: YoungFunction) -> Tuple[float, float]:
    """Exponent window of the complementary function."""
    return Y.p_plus / (Y.p_plus - 1.0), Y.p_minus / (Y.p_minus - 1.0)


def verify_conjugate_window(Y: YoungFunction,
                            grid: Optional[np.ndarray] = None,
                            tolerance: float = 1e-6) -> Dict[str, Any]:
    """
    Grid check of the sandwich for the complementary function.

    Its density is the inverse of g, so the ratio is t * s*(t) / conj(t).
    """
    t = np.logspace(-4, 4, 81) if grid is None else np.asarray(grid, dtype=float)
    conj = Y.conjugate
    ratios = np.array([ti * conj.maximiser(ti) / conj(ti) for ti in t])
    lower, upper = conjugate_exponent_window(Y)
    passed = bool(np.all(ratios >= lower - tolerance) and np.all(ratios <= upper + tolerance))
    return {
        "window": [lower, upper],
        "min_ratio": float(ratios.min()),
        "max_ratio": float(ratios.max()),
        "passed": passed,
    }


def _decade_increments(integrand: Callable[[float], float], edges: np.ndarray) -> np.ndarray:
    increments = []
    for a, b in zip(edges[:-1], edges[1:]):
        value, _ = integrate.quad(integrand, min(a, b), max(a, b), limit=200, epsrel=1e-10)
        increments.append(value)
    return np.array(increments)


def sobolev_conjugate_inverse(Y: YoungFunction,
                              n: int,
                              t: float,
                              decades: int = 12) -> Dict[str, Any]:
    """
    Evaluate the Sobolev critical inverse at t.

    The integrand G^{-1}(s) / s^((n+1)/n) is integrated adaptively. Before
    that, decade-by-decade truncations near 0 and near infinity decide
    whether the integral converges at 0 and diverges at infinity.

    Args:
        Y: Young function
        n: space dimension (>= 2)
        t: upper integration limit (>= 0)
        decades: number of decades probed on each side

    Returns:
        Report with the value (inf when the integral diverges at 0) and both
        convergence diagnostics
    """
    if n < 2:
        raise ConfigurationError(f"Dimension must be at least 2, got n={n}")
    if t < 0:
        raise ConfigurationError(f"t must be nonnegative, got {t}")

    exponent = (n + 1.0) / n

    def integrand(s: float) -> float:
        return inverse_G(Y, s) / s ** exponent

    near_zero = _decade_increments(integrand, 10.0 ** -np.arange(0, decades + 1, dtype=float))
    near_infinity = _decade_increments(integrand, 10.0 ** np.arange(0, decades // 2 + 1, dtype=float))

    zero_rates = near_zero[1:] / near_zero[:-1]
    infinity_rates = near_infinity[1:] / near_infinity[:-1]
    converges_at_zero = bool(np.all(zero_rates[-3:] < 0.99))
    diverges_at_infinity = bool(np.all(infinity_rates[-3:] >= 0.99))

    report: Dict[str, Any] = {
        "n": n,
        "t": float(t),
        "converges_at_zero": converges_at_zero,
        "diverges_at_infinity": diverges_at_infinity,
        "cond1_satisfied": converges_at_zero and diverges_at_infinity,
        "truncations": np.cumsum(near_zero).tolist(),
    }

    if not converges_at_zero:
        logger.warning(f"Sobolev conjugate integral diverges at 0 for {Y!r}, n={n}")
        report["value"] = math.inf
        return report

    if t == 0.0:
        report["value"] = 0.0
        return report

    value, _ = integrate.quad(integrand, 0.0, min(t, 1.0), limit=200, epsabs=0.0, epsrel=1e-10)
    if t > 1.0:
        tail, _ = integrate.quad(integrand, 1.0, t, limit=200, epsabs=0.0, epsrel=1e-10)
        value += tail
    report["value"] = float(value)
    return report


def luxemburg_norm(modular_evaluator: Callable[[np.ndarray], float],
                   u: np.ndarray,
                   p_minus: float,
                   p_plus: float,
                   tolerance: float = 1e-10) -> float:
    """
    inf{lam > 0 : modular(u / lam) <= 1}.

    Args:
        modular_evaluator: map from a field to its modular, monotone in scaling
        u: field accepted by the evaluator
        p_minus, p_plus: exponent window of the underlying Young function
        tolerance: relative tolerance on lam

    Returns:
        The norm; 0 for the zero field
    """
    u = np.asarray(getattr(u, "values", u), dtype=float)
    modular = float(modular_evaluator(u))
    if modular <= 0.0:
        return 0.0

    lo, hi = growth_bracket(modular, p_minus, p_plus)
    return optimize.brentq(lambda lam: float(modular_evaluator(u / lam)) - 1.0, lo, hi,
                           xtol=1e-300, rtol=max(tolerance, 4.0 * np.finfo(float).eps))


def is_slower_growth(H: YoungFunction,
                     G: YoungFunction,
                     lambdas: Sequence[float] = (0.5, 1.0, 2.0),
                     grid: Optional[np.ndarray] = None) -> bool:
    """
    Whether H grows more slowly than G.

    Checked as H(t) / G(lam t) decreasing on a large-t grid and dropping by at
    least two orders of magnitude across it, for each lam.
    """
    t = np.logspace(1, 8, 71) if grid is None else np.asarray(grid, dtype=float)
    for lam in lambdas:
        ratio = np.asarray(H(t), dtype=float) / np.asarray(G(lam * t), dtype=float)
        if not np.all(np.diff(ratio) <= 1e-12 * ratio[:-1]):
            return False
        if not ratio[-1] <= 1e-2 * ratio[0]:
            return False
    return True


def check_young_properties(Y: YoungFunction,
                           n_samples: int = 1000,
                           rng: Optional[np.random.Generator] = None,
                           tolerance: float = EXPONENT_TOLERANCE) -> Dict[str, Any]:
    """
    Run the Young-function property suite on random samples.

    Covers the scaling sandwich, the doubling bound, Young's inequality and
    its equality case, inverse round trips, convexity, density monotonicity
    and both exponent windows.

    Returns:
        Report with one entry per property and an overall "passed" flag
    """
    rng = rng or np.random.default_rng(0)
    pm, pp = Y.p_minus, Y.p_plus
    checks: Dict[str, Dict[str, Any]] = {}

    a = rng.uniform(0.0, 10.0, n_samples)
    b = rng.uniform(0.0, 10.0, n_samples)
    Gb = Y(b)
    Gab = Y(a * b)
    lower = np.minimum(a ** pm, a ** pp) * Gb
    upper = np.maximum(a ** pm, a ** pp) * Gb
    slack = tolerance * np.maximum(Gab, 1e-300)
    l1_ok = (lower <= Gab + slack) & (Gab <= upper + slack)
    checks["scaling_sandwich"] = {"passed": bool(l1_ok.all()), "failures": int((~l1_ok).sum())}

    doubling = Y(a + b) <= 2.0 ** pp * (Y(a) + Gb) * (1.0 + tolerance)
    checks["doubling"] = {"passed": bool(doubling.all()), "failures": int((~doubling).sum())}

    conj = Y.conjugate
    s = rng.uniform(0.0, 10.0, n_samples)
    t = rng.uniform(0.0, 10.0, n_samples)
    conj_t = np.array([conj(ti) for ti in t])
    rhs = Y(s) + conj_t
    young_ok = s * t <= rhs + tolerance * np.maximum(rhs, 1.0)
    checks["young_inequality"] = {"passed": bool(young_ok.all()), "failures": int((~young_ok).sum())}

    t_eq = Y.density(s)
    gap = np.abs(s * t_eq - Y(s) - np.array([conj(ti) for ti in t_eq]))
    equality_ok = gap <= tolerance * np.maximum(s * t_eq, 1.0)
    checks["young_equality"] = {"passed": bool(equality_ok.all()), "max_gap": float(gap.max())}

    t_round = 10.0 ** rng.uniform(-3.0, 3.0, n_samples)
    recovered = np.array([inverse_G(Y, float(Y(ti))) for ti in t_round])
    rel = np.abs(recovered - t_round) / t_round
    checks["round_trip"] = {"passed": bool(np.all(rel <= 1e-10)), "max_relative_error": float(rel.max())}

    t1 = rng.uniform(0.0, 10.0, n_samples)
    t2 = t1 + rng.uniform(0.0, 10.0, n_samples)
    theta = rng.uniform(0.0, 1.0, n_samples)
    chord = theta * Y(t1) + (1.0 - theta) * Y(t2)
    convex_ok = Y(theta * t1 + (1.0 - theta) * t2) <= chord * (1.0 + tolerance) + 1e-300
    checks["convexity"] = {"passed": bool(convex_ok.all()), "failures": int((~convex_ok).sum())}

    grid = default_grid()
    density = Y.density(grid)
    density_ok = (float(Y.density(0.0)) == 0.0) and bool(np.all(density > 0)) \
        and bool(np.all(np.diff(density) >= -tolerance * density[1:]))
    checks["density"] = {"passed": density_ok}

    checks["exponent_window"] = verify_exponent_window(Y, grid, tolerance)
    checks["conjugate_window"] = verify_conjugate_window(Y)

    passed = all(check["passed"] for check in checks.values())
    logger.info(f"Young property suite for {Y!r}: {'passed' if passed else 'FAILED'}")
    return {"young": Y.describe(), "n_samples": n_samples, "checks": checks, "passed": passed}
