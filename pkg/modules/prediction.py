"""
Best linear unbiased (BLUP) and invariant (BLIP) prediction of the next
lower k-record, with mean squared prediction errors in units of sigma^2.
"""
from dataclasses import dataclass, asdict
from typing import *

import numpy as np
from scipy import linalg

from modules.linear_estimation import BlueCoefficients, SpdSolver, blue_coefficients, blue_estimate, ArrayOrRecords, \
    _record_values
from modules.moments import MomentTable, build_moment_table
from modules.utils.const import TABLE_DIGITS
from modules.utils.errors import InsufficientDataError, DimensionError, ConditioningError, require
from modules.utils.logging_utils import get_module_logger

logger = get_module_logger('prediction')


@dataclass(frozen=True)
class PredictionSetup:
    """
    Moments needed to predict Z_n+1(k) from Z_1(k), ..., Z_n(k)
    :param table: moment table of the first n records
    :param alpha_next: mean of Z_n+1(k)
    :param var_next: variance of Z_n+1(k)
    :param omega: Cov(Z_i(k), Z_n+1(k)), i = 1..n
    :param digits: when set, V4 is rounded to this many decimals as the printed tables are
    """
    table: MomentTable
    alpha_next: float
    var_next: float
    omega: np.ndarray
    digits: Optional[int] = None

    def rounded(self, digits: int = TABLE_DIGITS) -> 'PredictionSetup':
        """Copy with every moment rounded as in the printed tables"""
        return PredictionSetup(table=self.table.rounded(digits), alpha_next=round(self.alpha_next, digits),
                               var_next=round(self.var_next, digits), omega=np.round(self.omega, digits),
                               digits=digits)


@dataclass(frozen=True)
class PredictionResult:
    """
    Point predictors of R_n+1(k) with MSPEs in units of sigma^2; the
    *_scaled fields carry them in data units when a sigma estimate is known
    """
    blup: float
    blip: float
    v4: float
    mspe_blup: float
    mspe_blip: float
    rec: float
    mspe_blup_scaled: float = float('nan')
    mspe_blip_scaled: float = float('nan')

    def to_dict(self) -> Dict[str, float]:
        return {key: float(value) for key, value in asdict(self).items()}


def prediction_setup(n: int, k: int, theta: float) -> PredictionSetup:
    """Setup from the (n + 1)-record moment table"""
    require(n >= 2, InsufficientDataError, f"prediction needs at least 2 records, got n={n}")
    extended = build_moment_table(n + 1, k, theta)
    table = build_moment_table(n, k, theta)
    setup = PredictionSetup(table=table, alpha_next=float(extended.alpha[n]),
                            var_next=float(extended.B[n, n]), omega=np.array(extended.B[:n, n]))
    try:
        linalg.cholesky(np.array(extended.B), lower=True)
    except linalg.LinAlgError:
        raise ConditioningError(f"bordered covariance matrix is not positive definite for n={n}, k={k}, "
                                f"theta={theta}", context={'n': n, 'k': k, 'theta': theta})
    return setup


class _PredictionTerms:
    """omega'B^-1 products shared by all prediction formulas"""

    def __init__(self, setup: PredictionSetup, coeffs: BlueCoefficients):
        require(coeffs.n == setup.table.n, DimensionError,
                f"{coeffs.n} coefficients for a setup of {setup.table.n} records")
        self.solver = SpdSolver(setup.table)
        self.b_inv_omega = self.solver.solve(setup.omega)
        alpha = np.asarray(setup.table.alpha)
        self.omega_one = float(self.b_inv_omega.sum())
        self.omega_alpha = float(self.b_inv_omega @ alpha)
        self.omega_omega = float(self.b_inv_omega @ setup.omega)
        self.c1 = 1.0 - self.omega_one
        self.c2 = setup.alpha_next - self.omega_alpha
        self.v4 = self.c1 * coeffs.V3 + self.c2 * coeffs.V2
        if setup.digits is not None:
            self.v4 = round(self.v4, setup.digits)


def blup(records: ArrayOrRecords, setup: PredictionSetup, coeffs: BlueCoefficients) -> float:
    """
    mu* + alpha_n+1 sigma* + omega'B^-1 (R - mu* 1 - sigma* alpha)
    """
    values = _record_values(records)
    require(values.size == setup.table.n, DimensionError,
            f"{values.size} records for a setup of {setup.table.n}")
    mu_star, sigma_star = blue_estimate(values, coeffs)
    terms = _PredictionTerms(setup, coeffs)
    residual = values - mu_star - sigma_star * np.asarray(setup.table.alpha)
    return float(mu_star + setup.alpha_next * sigma_star + terms.b_inv_omega @ residual)


def mspe_blup(setup: PredictionSetup, coeffs: BlueCoefficients) -> float:
    """
    c1^2 V1 + c2^2 V2 + 2 c1 c2 V3 - omega'B^-1 omega + Var(Z_n+1), with
    c1 = 1 - omega'B^-1 1 and c2 = alpha_n+1 - omega'B^-1 alpha
    """
    t = _PredictionTerms(setup, coeffs)
    value = (t.c1 ** 2 * coeffs.V1 + t.c2 ** 2 * coeffs.V2 + 2 * t.c1 * t.c2 * coeffs.V3
             - t.omega_omega + setup.var_next)
    if value <= 0:
        raise ConditioningError(f"nonpositive MSPE {value}", context={'n': setup.table.n, 'k': setup.table.k,
                                                                     'theta': setup.table.theta})
    return float(value)


def v4(setup: PredictionSetup, coeffs: BlueCoefficients) -> float:
    """(1 - omega'B^-1 1) V3 + (alpha_n+1 - omega'B^-1 alpha) V2"""
    return float(_PredictionTerms(setup, coeffs).v4)


def blip_and_mspe(blup_value: float, sigma_star: float, setup: PredictionSetup,
                  coeffs: BlueCoefficients) -> Tuple[float, float]:
    """
    BLIP = BLUP - V4 / (1 + V2) sigma*, and its MSPE
    [(A + 1) c1^2 + C c2^2 - 2 D c1 c2] / Delta - omega'B^-1 omega + Var(Z_n+1)
    with Delta = (A + 1) C - D^2
    """
    t = _PredictionTerms(setup, coeffs)
    blip = blup_value - t.v4 / (1 + coeffs.V2) * sigma_star

    ones = np.ones(setup.table.n)
    alpha = np.asarray(setup.table.alpha)
    b_inv_one = t.solver.solve(ones)
    A = float(alpha @ t.solver.solve(alpha))
    C = float(ones @ b_inv_one)
    D = float(alpha @ b_inv_one)
    delta = (A + 1) * C - D ** 2
    mspe = ((A + 1) * t.c1 ** 2 + C * t.c2 ** 2 - 2 * D * t.c1 * t.c2) / delta - t.omega_omega + setup.var_next
    if mspe <= 0:
        raise ConditioningError(f"nonpositive MSPE {mspe}", context={'n': setup.table.n, 'k': setup.table.k,
                                                                    'theta': setup.table.theta})
    return float(blip), float(mspe)


def predict(records: ArrayOrRecords, setup: PredictionSetup, coeffs: BlueCoefficients,
            sigma_estimate: Optional[float] = None) -> PredictionResult:
    """
    BLUP, BLIP, V4, both MSPEs and their ratio for the next record
    :param records: first n records
    :param setup: prediction setup for n records
    :param coeffs: BLUE coefficients for n records
    :param sigma_estimate: scale used to express MSPEs in data units (sigma~ or sigma*)
    """
    blup_value = blup(records, setup, coeffs)
    _, sigma_star = blue_estimate(_record_values(records), coeffs)
    blip_value, mspe_blip = blip_and_mspe(blup_value, sigma_star, setup, coeffs)
    mspe_unbiased = mspe_blup(setup, coeffs)
    scale = sigma_estimate ** 2 if sigma_estimate is not None else float('nan')
    return PredictionResult(blup=blup_value, blip=blip_value, v4=v4(setup, coeffs),
                            mspe_blup=mspe_unbiased, mspe_blip=mspe_blip,
                            rec=mspe_unbiased / mspe_blip,
                            mspe_blup_scaled=mspe_unbiased * scale, mspe_blip_scaled=mspe_blip * scale)


def prediction_rec(n: int, k: int, theta: float) -> float:
    """MSPE(BLUP) / MSPE(BLIP) at one grid point"""
    setup = prediction_setup(n, k, theta)
    coeffs = blue_coefficients(setup.table)
    _, mspe = blip_and_mspe(0.0, 0.0, setup, coeffs)
    return mspe_blup(setup, coeffs) / mspe
