"""
Exact single and product moments of standardized lower k-records from the
unit-Gompertz law, their recurrence relations, and the mean vector /
covariance matrix used by the linear estimators.

With T = -ln F(Z) the record transforms are partial sums of exponentials
with rate k, which gives the closed forms below in terms of the upper
incomplete gamma function at x = k.
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import *
import math

import numpy as np
import pandas as pd
from scipy import integrate, linalg, special

from modules.utils.const import (CANCELLATION_LIMIT, SINGULAR_DENOMINATOR, QUAD_EPSABS, QUAD_EPSREL,
                                 K_GRID, THETA_GRID, MOMENT_N_MAX, TABLE_DIGITS)
from modules.utils.errors import ParameterDomainError, ConditioningError, require
from modules.utils.logging_utils import get_module_logger
from modules.utils.special_functions import (upper_incomplete_gamma, compensated_sum, cancellation_ratio,
                                             binomial, factorial)

logger = get_module_logger('moments')


@dataclass(frozen=True)
class MomentTable:
    """
    Means and covariances of the first n standardized lower k-records
    :param theta: shape
    :param k: record order
    :param n: number of records
    :param alpha: means alpha_1(k) > ... > alpha_n(k)
    :param B: symmetric positive definite covariance matrix
    """
    theta: float
    k: int
    n: int
    alpha: np.ndarray
    B: np.ndarray

    def rounded(self, digits: int = TABLE_DIGITS) -> 'MomentTable':
        """Copy with entries rounded as in the printed tables"""
        return MomentTable(self.theta, self.k, self.n, _frozen(np.round(self.alpha, digits)),
                           _frozen(np.round(self.B, digits)))


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


def _check_order(n: int, k: int, theta: float):
    require(int(n) == n and n >= 1, ParameterDomainError, f"n must be an integer >= 1, got {n}")
    require(int(k) == k and k >= 1, ParameterDomainError, f"k must be an integer >= 1, got {k}")
    require(np.isfinite(theta) and theta > 0, ParameterDomainError, f"theta must be positive, got {theta}")


def _gamma_log_density(t: float, shape: int, k: int) -> float:
    return shape * math.log(k) + (shape - 1) * math.log(t) - k * t - special.gammaln(shape)


def _gamma_density(t: float, shape: int, k: int) -> float:
    if t <= 0:
        return float(k) if shape == 1 else 0.0
    return math.exp(_gamma_log_density(t, shape, k))


def _single_moment_quad(r: float, n: int, k: int, theta: float) -> float:
    # E[(1 + T)^(-r/theta)], T ~ Gamma(n, rate k)
    value, _ = integrate.quad(lambda t: (1.0 + t) ** (-r / theta) * _gamma_density(t, n, k),
                              0.0, np.inf, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200)
    return value


def _product_moment_quad(r: float, s: float, m: int, n: int, k: int, theta: float) -> float:
    # E[(1 + T)^(-r/theta) (1 + T + D)^(-s/theta)], T ~ Gamma(m, k), D ~ Gamma(n - m, k) independent
    def integrand(d, t):
        return ((1.0 + t) ** (-r / theta) * (1.0 + t + d) ** (-s / theta)
                * _gamma_density(t, m, k) * _gamma_density(d, n - m, k))

    value, _ = integrate.dblquad(integrand, 0.0, np.inf, 0.0, np.inf, epsabs=QUAD_EPSABS, epsrel=1e-10)
    return value


@lru_cache(maxsize=None)
def _single_moment(r: float, n: int, k: int, theta: float) -> float:
    if r == 0:
        return 1.0
    scale = math.exp(k) / factorial(n - 1)
    terms = [(-1) ** (n - i - 1) * binomial(n - 1, i) * k ** (n + r / theta - i - 1)
             * upper_incomplete_gamma(i - r / theta + 1, k) * scale
             for i in range(n)]
    result = compensated_sum(terms)
    ratio = cancellation_ratio(terms, result)
    if ratio > CANCELLATION_LIMIT or not np.isfinite(result):
        logger.warning(f"[Moments] single moment r={r}, n={n}, k={k}, theta={theta} loses "
                       f"{math.log10(ratio):.1f} digits, switching to quadrature")
        return _single_moment_quad(r, n, k, theta)
    return result


def single_moment(r: float, n: int, k: int, theta: float) -> float:
    """
    E[Z_n(k)^r] for the standardized law; r may be any nonnegative real
    :param r: moment order
    :param n: record index
    :param k: record order
    :param theta: shape
    """
    _check_order(n, k, theta)
    require(np.isfinite(r) and r >= 0, ParameterDomainError, f"moment order must be >= 0, got {r}")
    return _single_moment(float(r), int(n), int(k), float(theta))


def mean_and_variance(n: int, k: int, theta: float) -> Tuple[float, float]:
    """Mean alpha_n(k) and variance of Z_n(k)"""
    mean = single_moment(1, n, k, theta)
    variance = single_moment(2, n, k, theta) - mean ** 2
    if variance <= 0:
        raise ConditioningError(f"nonpositive variance {variance} for n={n}, k={k}, theta={theta}",
                                context={'n': n, 'k': k, 'theta': theta})
    return mean, variance


@lru_cache(maxsize=None)
def _product_moment(r: float, s: float, m: int, n: int, k: int, theta: float) -> float:
    if r == 0 and s == 0:
        return 1.0
    scale = theta * k ** (n - 1) * math.exp(k) / (factorial(m - 1) * factorial(n - m - 1))
    terms = []
    for i in range(m):
        for j in range(n - m):
            denominator = r - theta * (n - 1 - i - j)
            if abs(denominator) < SINGULAR_DENOMINATOR:
                logger.warning(f"[Moments] removable singularity in product moment (r={r}, s={s}, m={m}, "
                               f"n={n}, k={k}, theta={theta}), switching to quadrature")
                return _product_moment_quad(r, s, m, n, k, theta)
            outer = upper_incomplete_gamma(j - s / theta + 1, k) / k ** (j - s / theta)
            inner = (upper_incomplete_gamma(n - (s + r) / theta - i, k)
                     / k ** (n - i - 1 - (s + r) / theta))
            sign = (-1) ** (n - m - 1 - j + i)
            terms.append(scale * sign * binomial(m - 1, i) * binomial(n - m - 1, j)
                         / denominator * (outer - inner))
    result = compensated_sum(terms)
    ratio = cancellation_ratio(terms, result)
    if ratio > CANCELLATION_LIMIT or not np.isfinite(result):
        logger.warning(f"[Moments] product moment (r={r}, s={s}, m={m}, n={n}, k={k}, theta={theta}) loses "
                       f"{math.log10(ratio):.1f} digits, switching to quadrature")
        return _product_moment_quad(r, s, m, n, k, theta)
    return result


def product_moment(r: float, s: float, m: int, n: int, k: int, theta: float) -> float:
    """
    E[Z_m(k)^r Z_n(k)^s] for m < n
    :param r: order on the earlier record
    :param s: order on the later record
    :param m: earlier record index
    :param n: later record index, > m
    """
    _check_order(n, k, theta)
    require(int(m) == m and 1 <= m < n, ParameterDomainError, f"need 1 <= m < n, got m={m}, n={n}")
    require(np.isfinite(r) and r >= 0 and np.isfinite(s) and s >= 0, ParameterDomainError,
            f"moment orders must be >= 0, got r={r}, s={s}")
    return _product_moment(float(r), float(s), int(m), int(n), int(k), float(theta))


def covariance(m: int, n: int, k: int, theta: float) -> float:
    """Cov(Z_m(k), Z_n(k)); the variance when m == n, symmetric in (m, n)"""
    if m > n:
        m, n = n, m
    if m == n:
        return mean_and_variance(n, k, theta)[1]
    return product_moment(1, 1, m, n, k, theta) - single_moment(1, m, k, theta) * single_moment(1, n, k, theta)


@lru_cache(maxsize=256)
def _build_moment_table(n: int, k: int, theta: float) -> MomentTable:
    alpha = np.array([single_moment(1, i, k, theta) for i in range(1, n + 1)])
    B = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            B[i, j] = B[j, i] = covariance(i + 1, j + 1, k, theta)
    try:
        linalg.cholesky(B, lower=True)
    except linalg.LinAlgError:
        logger.error(f"[Moments] covariance matrix is not positive definite for n={n}, k={k}, theta={theta}")
        raise ConditioningError(f"covariance matrix is not positive definite for n={n}, k={k}, theta={theta}",
                                context={'n': n, 'k': k, 'theta': theta})
    logger.debug(f"[Moments] built table n={n}, k={k}, theta={theta}")
    return MomentTable(theta, k, n, _frozen(alpha), _frozen(B))


def build_moment_table(n: int, k: int, theta: float) -> MomentTable:
    """
    Mean vector and covariance matrix of (Z_1(k), ..., Z_n(k))
    :raises ConditioningError: if the covariance matrix fails a Cholesky factorization
    """
    _check_order(n, k, theta)
    return _build_moment_table(int(n), int(k), float(theta))


def recurrence_residual_single(r: float, n: int, k: int, theta: float) -> float:
    """
    Residual of mu_n^(r+theta) = (theta k / r) (mu_(n-1)^(r) - mu_n^(r)),
    each side evaluated independently from the closed form
    """
    require(n > 1, ParameterDomainError, f"recurrence needs n > 1, got {n}")
    require(r > 0, ParameterDomainError, f"recurrence needs r > 0, got {r}")
    lhs = single_moment(r + theta, n, k, theta)
    rhs = theta * k / r * (single_moment(r, n - 1, k, theta) - single_moment(r, n, k, theta))
    return lhs - rhs


def recurrence_residual_product(r: float, s: float, m: int, n: int, k: int, theta: float) -> float:
    """
    Residual of mu_(m,n)^(r,s+theta) = (theta k / s) (mu_(m,n-1)^(r,s) - mu_(m,n)^(r,s)).
    Needs n - 1 > m so that both product moments on the right exist
    """
    require(s > 0, ParameterDomainError, f"recurrence needs s > 0, got {s}")
    require(1 < m < n - 1, ParameterDomainError, f"recurrence needs 1 < m < n - 1, got m={m}, n={n}")
    lhs = product_moment(r, s + theta, m, n, k, theta)
    rhs = theta * k / s * (product_moment(r, s, m, n - 1, k, theta) - product_moment(r, s, m, n, k, theta))
    return lhs - rhs


def moment_table_frame(k_grid: Sequence[int] = K_GRID,
                       theta_grid: Sequence[float] = THETA_GRID,
                       n_max: int = MOMENT_N_MAX) -> pd.DataFrame:
    """Means in long layout (k, n, theta, mean)"""
    rows = [{'k': k, 'n': n, 'theta': theta, 'mean': single_moment(1, n, k, theta)}
            for k in k_grid for n in range(1, n_max + 1) for theta in theta_grid]
    return pd.DataFrame(rows, columns=['k', 'n', 'theta', 'mean'])


def covariance_frame(k_grid: Sequence[int] = K_GRID,
                     theta_grid: Sequence[float] = THETA_GRID,
                     n_max: int = MOMENT_N_MAX) -> pd.DataFrame:
    """Variances and covariances in long layout (k, m, n, theta, cov), m <= n"""
    rows = [{'k': k, 'm': m, 'n': n, 'theta': theta, 'cov': covariance(m, n, k, theta)}
            for k in k_grid for m in range(1, n_max + 1) for n in range(m, n_max + 1) for theta in theta_grid]
    return pd.DataFrame(rows, columns=['k', 'm', 'n', 'theta', 'cov'])
