"""
Special functions used by the record moment formulas.

The moment sums need the upper incomplete gamma function at negative,
non-integer orders (a = i - r/theta + 1 with theta < 1), which scipy only
covers for a > 0. Negative orders are handled here.
"""
from typing import *
import math
import sys

import numpy as np
from scipy import special

from modules.utils.errors import ParameterDomainError, OptimizationError, require

GAMMA_ACCURACY = 1.0e-15
GAMMA_MAX_ITERATION = 1000

_TINY = sys.float_info.min / sys.float_info.epsilon


def upper_incomplete_gamma(a: float, x: float) -> float:
    """
    Upper incomplete gamma function Gamma(a, x) = int_x^inf t^(a-1) e^(-t) dt
    :param a: order, any finite real
    :param x: lower limit, strictly positive
    :return: value of Gamma(a, x)
    """
    require(np.isfinite(a), ParameterDomainError, f"order a must be finite, got {a}")
    require(np.isfinite(x) and x > 0, ParameterDomainError, f"x must be positive and finite, got {x}")
    a, x = float(a), float(x)

    if a > 0:
        return float(special.gammaincc(a, x) * special.gamma(a))
    if x >= 1.0:
        return _continued_fraction(a, x)
    return _downward_recurrence(a, x)


def _continued_fraction(a: float, x: float) -> float:
    # modified Lentz evaluation, converges for any real a once x >= 1 > a + 1
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, GAMMA_MAX_ITERATION + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < GAMMA_ACCURACY:
            return math.exp(-x + a * math.log(x)) * h
    raise OptimizationError(f"Continued fraction for Gamma({a}, {x}) did not converge",
                            diagnostics={'a': a, 'x': x, 'iterations': GAMMA_MAX_ITERATION})


def _downward_recurrence(a: float, x: float) -> float:
    # Gamma(b - 1, x) = (Gamma(b, x) - x^(b-1) e^(-x)) / (b - 1), started at the first order >= 0
    steps = math.ceil(-a)
    start = a + steps
    if abs(start) < 1e-14:
        start = 0.0
        value = float(special.exp1(x))
    else:
        value = float(special.gammaincc(start, x) * special.gamma(start))
    order = start
    for _ in range(steps):
        order -= 1.0
        value = (value - math.exp(order * math.log(x) - x)) / order
    return value


def compensated_sum(terms: Iterable[float]) -> float:
    """
    Sum of floats with compensated (error-free) accumulation
    :param terms: values to add
    :return: correctly rounded sum
    """
    return math.fsum(terms)


def cancellation_ratio(terms: Sequence[float], total: float) -> float:
    """
    Ratio of the largest term magnitude to the magnitude of the sum,
    10^d means roughly d decimal digits are lost to cancellation
    :param terms: summands
    :param total: their sum
    :return: max|term| / |total| (inf for a zero total with nonzero terms)
    """
    largest = max((abs(t) for t in terms), default=0.0)
    if largest == 0.0:
        return 1.0
    if total == 0.0:
        return math.inf
    return largest / abs(total)


def binomial(n: int, i: int) -> float:
    """Binomial coefficient, exact integer arithmetic up to n=20, log-gamma above"""
    if n <= 20:
        return float(math.comb(n, i))
    return math.exp(special.gammaln(n + 1) - special.gammaln(i + 1) - special.gammaln(n - i + 1))


def factorial(n: int) -> float:
    """n! as a float, exact up to n=20, log-gamma above"""
    if n <= 20:
        return float(math.factorial(n))
    return math.exp(special.gammaln(n + 1))
