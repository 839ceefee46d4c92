"""
Best linear unbiased (BLUE) and best linear invariant (BLIE) estimation of
location and scale from observed lower k-records, by generalized least
squares on the exact record means and covariances.
"""
from dataclasses import dataclass, asdict, replace
from typing import *

import numpy as np
import pandas as pd
from scipy import linalg

from modules.moments import MomentTable, build_moment_table
from modules.record_engine import RecordSeries
from modules.utils.const import TABLE_DIGITS
from modules.utils.errors import InsufficientDataError, DimensionError, ConditioningError, require
from modules.utils.logging_utils import get_module_logger

logger = get_module_logger('linear_estimation')

ArrayOrRecords = Union[RecordSeries, Sequence[float], np.ndarray]


class SpdSolver:
    """
    One Cholesky factorization of a covariance matrix reused for every
    solve against it
    :param table: moment table whose B is factorized
    """

    def __init__(self, table: MomentTable):
        self.table = table
        try:
            self.factor = linalg.cho_factor(np.array(table.B), lower=True)
        except linalg.LinAlgError:
            raise ConditioningError(f"covariance matrix is singular for n={table.n}, k={table.k}, "
                                    f"theta={table.theta}", context={'n': table.n, 'k': table.k,
                                                                     'theta': table.theta})
        condition = np.linalg.cond(table.B)
        if condition > 1e12:
            logger.warning(f"[GLS] covariance matrix for n={table.n}, k={table.k}, theta={table.theta} "
                           f"has condition number {condition:.3g}")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return linalg.cho_solve(self.factor, np.asarray(rhs, dtype=float))


@dataclass(frozen=True)
class BlueCoefficients:
    """
    GLS weights and sigma^2-normalized variance factors
    :param a: location weights, mu* = a'R
    :param b: scale weights, sigma* = b'R
    :param V1: Var(mu*) / sigma^2
    :param V2: Var(sigma*) / sigma^2
    :param V3: Cov(mu*, sigma*) / sigma^2
    """
    a: np.ndarray
    b: np.ndarray
    V1: float
    V2: float
    V3: float
    theta: float = float('nan')
    k: int = 0

    @property
    def n(self) -> int:
        return int(np.size(self.a))


@dataclass(frozen=True)
class LinearEstimates:
    """
    Point estimates with variances in units of sigma^2
    """
    mu_blue: float
    sigma_blue: float
    mu_blie: float
    sigma_blie: float
    var_mu_blue: float
    var_sigma_blue: float
    cov_blue: float
    var_mu_blie: float
    var_sigma_blie: float
    cov_blie: float
    mse_mu_blie: float = float('nan')
    mse_sigma_blie: float = float('nan')

    def to_dict(self) -> Dict[str, float]:
        return {key: float(value) for key, value in asdict(self).items()}


def blue_coefficients(table: MomentTable, solver: Optional[SpdSolver] = None) -> BlueCoefficients:
    """
    GLS weights for (mu, sigma) from the record means and covariances
    :param table: moment table with n >= 2
    :param solver: factorization of table.B to reuse
    """
    require(table.n >= 2, InsufficientDataError, f"two parameters need at least 2 records, got n={table.n}")
    solver = solver or SpdSolver(table)
    ones = np.ones(table.n)
    alpha = np.asarray(table.alpha)
    b_inv_one = solver.solve(ones)
    b_inv_alpha = solver.solve(alpha)

    A = float(alpha @ b_inv_alpha)
    C = float(ones @ b_inv_one)
    D = float(alpha @ b_inv_one)
    delta = A * C - D ** 2
    if not delta > 1e-14 * max(A * C, 1e-300):
        raise ConditioningError(f"GLS normal equations are singular for n={table.n}, k={table.k}, "
                                f"theta={table.theta}", context={'n': table.n, 'k': table.k,
                                                                 'theta': table.theta, 'delta': delta})

    a = (A * b_inv_one - D * b_inv_alpha) / delta
    b = (C * b_inv_alpha - D * b_inv_one) / delta
    return BlueCoefficients(a=a, b=b, V1=A / delta, V2=C / delta, V3=-D / delta, theta=table.theta, k=table.k)


def round_coefficients(coeffs: BlueCoefficients, digits: int = TABLE_DIGITS) -> BlueCoefficients:
    """Weights and V factors rounded to the printed number of digits"""
    return replace(coeffs, a=np.round(coeffs.a, digits), b=np.round(coeffs.b, digits),
                   V1=round(coeffs.V1, digits), V2=round(coeffs.V2, digits), V3=round(coeffs.V3, digits))


def _record_values(records: ArrayOrRecords) -> np.ndarray:
    if isinstance(records, RecordSeries):
        return np.asarray(records.values)
    return np.asarray(records, dtype=float).ravel()


def blue_estimate(records: ArrayOrRecords, coeffs: BlueCoefficients) -> Tuple[float, float]:
    """
    mu* = a'R and sigma* = b'R
    :raises DimensionError: if the record count differs from the weight count
    """
    values = _record_values(records)
    require(values.size == coeffs.n, DimensionError,
            f"{values.size} records given for {coeffs.n} weights")
    return float(coeffs.a @ values), float(coeffs.b @ values)


def blie_variances(coeffs: BlueCoefficients) -> Tuple[float, float, float]:
    """(Var(mu~), Var(sigma~), Cov(mu~, sigma~)) in units of sigma^2"""
    V1, V2, V3 = coeffs.V1, coeffs.V2, coeffs.V3
    return (V1 - V3 ** 2 * (2 + V2) / (1 + V2) ** 2,
            V2 / (1 + V2) ** 2,
            V3 / (1 + V2) ** 2)


def blie_from_blue(mu_star: float, sigma_star: float,
                   coeffs: BlueCoefficients) -> Tuple[float, float, Tuple[float, float, float]]:
    """
    Mann's shift/scale of the BLUEs
    mu~ = mu* - V3 / (1 + V2) sigma*,  sigma~ = sigma* / (1 + V2)
    :return: mu~, sigma~ and blie_variances(coeffs)
    """
    mu_tilde = mu_star - coeffs.V3 / (1 + coeffs.V2) * sigma_star
    sigma_tilde = sigma_star / (1 + coeffs.V2)
    return mu_tilde, sigma_tilde, blie_variances(coeffs)


def relative_efficiency(coeffs: BlueCoefficients) -> Tuple[float, float]:
    """MSE(BLUE) / MSE(BLIE) for mu and sigma"""
    rec_mu = coeffs.V1 / (coeffs.V1 - coeffs.V3 ** 2 / (1 + coeffs.V2))
    rec_sigma = 1 + coeffs.V2
    return rec_mu, rec_sigma


def linear_estimates(records: ArrayOrRecords, coeffs: BlueCoefficients) -> LinearEstimates:
    """BLUE and BLIE of (mu, sigma) with their variances and BLIE mean squared errors"""
    mu_star, sigma_star = blue_estimate(records, coeffs)
    mu_tilde, sigma_tilde, (var_mu, var_sigma, cov) = blie_from_blue(mu_star, sigma_star, coeffs)
    return LinearEstimates(
        mu_blue=mu_star, sigma_blue=sigma_star, mu_blie=mu_tilde, sigma_blie=sigma_tilde,
        var_mu_blue=coeffs.V1, var_sigma_blue=coeffs.V2, cov_blue=coeffs.V3,
        var_mu_blie=var_mu, var_sigma_blie=var_sigma, cov_blie=cov,
        mse_mu_blie=coeffs.V1 - coeffs.V3 ** 2 / (1 + coeffs.V2),
        mse_sigma_blie=coeffs.V2 / (1 + coeffs.V2),
    )


def coefficients_for(n: int, k: int, theta: float) -> BlueCoefficients:
    """BLUE coefficients straight from (n, k, theta)"""
    return blue_coefficients(build_moment_table(n, k, theta))


def coefficient_frame(k_grid: Sequence[int], theta_grid: Sequence[float],
                      n_grid: Sequence[int]) -> pd.DataFrame:
    """Weights in long layout (k, theta, n, i, a, b)"""
    rows = []
    for k in k_grid:
        for theta in theta_grid:
            for n in n_grid:
                coeffs = coefficients_for(n, k, theta)
                rows.extend({'k': k, 'theta': theta, 'n': n, 'i': i + 1, 'a': coeffs.a[i], 'b': coeffs.b[i]}
                            for i in range(n))
    return pd.DataFrame(rows, columns=['k', 'theta', 'n', 'i', 'a', 'b'])
