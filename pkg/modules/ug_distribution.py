"""
Unit-Gompertz family: density, distribution, quantile, sampling and
maximum likelihood fit of the two-parameter form.

Three-parameter form (location mu, scale sigma, shape theta), support
(mu, mu + sigma), standardized z = (x - mu) / sigma:
    F(z) = exp(-(z^-theta - 1)),  f(z) = theta z^-(theta+1) F(z)
Two-parameter form on (0, 1):
    F(x) = exp(-alpha (x^-theta - 1))
"""
from dataclasses import dataclass
from typing import *
import math

import numpy as np

from modules.utils.errors import ParameterDomainError, InsufficientDataError, OptimizationError, require
from modules.utils.logging_utils import get_module_logger
from modules.utils.special_functions import upper_incomplete_gamma  # noqa: F401  re-exported

logger = get_module_logger('ug_distribution')

ArrayLike = Union[float, Sequence[float], np.ndarray]

MLE_TOLERANCE = 1e-8
MLE_MAX_ITERATION = 200


@dataclass(frozen=True)
class UgParams:
    """
    Location/scale/shape triple
    :param mu: location, finite
    :param sigma: scale, > 0
    :param theta: shape, > 0
    """
    mu: float = 0.0
    sigma: float = 1.0
    theta: float = 1.0

    def __post_init__(self):
        require(np.isfinite(self.mu), ParameterDomainError, f"mu must be finite, got {self.mu}")
        require(np.isfinite(self.sigma) and self.sigma > 0, ParameterDomainError,
                f"sigma must be positive, got {self.sigma}")
        require(np.isfinite(self.theta) and self.theta > 0, ParameterDomainError,
                f"theta must be positive, got {self.theta}")

    @classmethod
    def standard(cls, theta: float) -> 'UgParams':
        return cls(0.0, 1.0, theta)

    @property
    def support(self) -> Tuple[float, float]:
        return self.mu, self.mu + self.sigma

    def standardize(self, x: ArrayLike) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mu) / self.sigma

    def from_standard(self, z: ArrayLike) -> np.ndarray:
        return self.mu + self.sigma * np.asarray(z, dtype=float)


@dataclass(frozen=True)
class UgTwoParam:
    """
    Two-parameter form on (0, 1)
    :param alpha: > 0
    :param theta: > 0
    """
    alpha: float
    theta: float

    def __post_init__(self):
        require(np.isfinite(self.alpha) and self.alpha > 0, ParameterDomainError,
                f"alpha must be positive, got {self.alpha}")
        require(np.isfinite(self.theta) and self.theta > 0, ParameterDomainError,
                f"theta must be positive, got {self.theta}")


def _shaped(x: ArrayLike, values: np.ndarray):
    values = np.asarray(values, dtype=float)
    return float(values.reshape(-1)[0]) if np.ndim(x) == 0 else values.reshape(np.shape(x))


def _log_standard_pdf(z: np.ndarray, theta: float) -> np.ndarray:
    # log f(z) on 0 < z <= 1; z^-theta overflows to inf for tiny z which gives -inf
    with np.errstate(over='ignore', divide='ignore', invalid='ignore'):
        log_z = np.log(z)
        return math.log(theta) - (theta + 1.0) * log_z - np.expm1(-theta * log_z)


def pdf(x: ArrayLike, p: UgParams) -> Union[float, np.ndarray]:
    """
    Density of the three-parameter form; 0 outside (mu, mu + sigma],
    the left-limit theta / sigma at the upper endpoint
    """
    z = np.atleast_1d(p.standardize(x))
    inside = (z > 0) & (z <= 1)
    out = np.zeros_like(z)
    out[inside] = np.exp(_log_standard_pdf(z[inside], p.theta)) / p.sigma
    return _shaped(x, out)


def cdf(x: ArrayLike, p: UgParams) -> Union[float, np.ndarray]:
    """Distribution function of the three-parameter form, 0 at mu and 1 at mu + sigma"""
    z = np.atleast_1d(p.standardize(x))
    out = np.where(z >= 1, 1.0, 0.0)
    inside = (z > 0) & (z < 1)
    with np.errstate(over='ignore'):
        out[inside] = np.exp(-np.expm1(-p.theta * np.log(z[inside])))
    return _shaped(x, out)


def quantile(u: ArrayLike, p: UgParams) -> Union[float, np.ndarray]:
    """
    Inverse distribution function mu + sigma (1 - ln u)^(-1/theta)
    :param u: probabilities strictly inside (0, 1)
    """
    uu = np.asarray(u, dtype=float)
    require(bool(np.all((uu > 0) & (uu < 1))), ParameterDomainError, "probabilities must lie in (0, 1)")
    values = p.mu + p.sigma * (1.0 - np.log(uu)) ** (-1.0 / p.theta)
    return _shaped(u, values)


def sample(n: int, p: UgParams, seed: Union[int, np.random.Generator, None] = None) -> np.ndarray:
    """
    n i.i.d. draws by inverse transform of uniforms
    :param n: number of draws, >= 1
    :param p: distribution parameters
    :param seed: integer seed or an existing generator
    """
    require(int(n) == n and n >= 1, ParameterDomainError, f"n must be a positive integer, got {n}")
    rng = np.random.default_rng(seed)
    u = rng.uniform(np.finfo(float).tiny, 1.0, size=int(n))
    return quantile(u, p)


def pdf_two_param(x: ArrayLike, p: UgTwoParam) -> Union[float, np.ndarray]:
    """Density alpha theta x^-(theta+1) exp(-alpha (x^-theta - 1)) on (0, 1)"""
    xx = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros_like(xx)
    inside = (xx > 0) & (xx <= 1)
    with np.errstate(over='ignore', divide='ignore', invalid='ignore'):
        log_x = np.log(xx[inside])
        out[inside] = np.exp(math.log(p.alpha * p.theta) - (p.theta + 1.0) * log_x
                             - p.alpha * np.expm1(-p.theta * log_x))
    return _shaped(x, out)


def cdf_two_param(x: ArrayLike, p: UgTwoParam) -> Union[float, np.ndarray]:
    """Distribution function exp(-alpha (x^-theta - 1)) on (0, 1)"""
    xx = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.where(xx >= 1, 1.0, 0.0)
    inside = (xx > 0) & (xx < 1)
    with np.errstate(over='ignore'):
        out[inside] = np.exp(-p.alpha * np.expm1(-p.theta * np.log(xx[inside])))
    return _shaped(x, out)


def _check_unit_data(data: ArrayLike) -> np.ndarray:
    x = np.asarray(data, dtype=float).ravel()
    require(x.size >= 2, InsufficientDataError, f"at least 2 observations are needed, got {x.size}")
    require(bool(np.all(np.isfinite(x) & (x > 0) & (x < 1))), ParameterDomainError,
            "all observations must lie strictly inside (0, 1)")
    return x


def log_likelihood(data: ArrayLike, p: UgTwoParam) -> float:
    """Log-likelihood of the two-parameter form"""
    x = _check_unit_data(data)
    log_x = np.log(x)
    n = x.size
    return float(n * math.log(p.alpha) + n * math.log(p.theta) - (p.theta + 1.0) * log_x.sum()
                 - p.alpha * np.expm1(-p.theta * log_x).sum())


def _score_and_hessian(log_x: np.ndarray, u: float, v: float):
    # derivatives in u = ln(alpha), v = ln(theta)
    alpha, theta = math.exp(u), math.exp(v)
    n = log_x.size
    with np.errstate(over="ignore", invalid="ignore"):
        power = np.exp(-theta * log_x)
    s = np.sum(power - 1.0)
    s1 = -np.sum(power * log_x)
    s2 = np.sum(power * log_x ** 2)
    t = np.sum(log_x)

    grad = np.array([n - alpha * s, n - theta * t - alpha * theta * s1])
    h_uv = -alpha * theta * s1
    hessian = np.array([[-alpha * s, h_uv],
                        [h_uv, -theta * t - alpha * theta * s1 - alpha * theta ** 2 * s2]])
    value = n * u + n * v - (theta + 1.0) * t - alpha * s
    return value, grad, hessian


def fit_mle(data: ArrayLike,
            tolerance: float = MLE_TOLERANCE,
            max_iteration: int = MLE_MAX_ITERATION) -> UgTwoParam:
    """
    Maximum likelihood fit of (alpha, theta) by damped Newton steps on
    (ln alpha, ln theta), started at theta = 1 with the profile optimum alpha
    :param data: observations strictly inside (0, 1)
    :param tolerance: bound on the norm of the log-parameter gradient
    :param max_iteration: iteration cap
    :return: fitted parameters
    """
    x = _check_unit_data(data)
    log_x = np.log(x)
    n = x.size

    v = 0.0
    u = math.log(n / np.sum(np.expm1(-log_x)))
    value, grad, hessian = _score_and_hessian(log_x, u, v)

    for iteration in range(max_iteration):
        if np.linalg.norm(grad) <= tolerance:
            logger.debug(f"[MLE] converged after {iteration} iterations")
            return UgTwoParam(alpha=math.exp(u), theta=math.exp(v))

        try:
            np.linalg.cholesky(-hessian)
            step = np.linalg.solve(-hessian, grad)
        except np.linalg.LinAlgError:
            step = grad / max(1.0, float(np.linalg.norm(grad)))

        slope = float(grad @ step)
        # roundoff floor of the log-likelihood near the optimum
        noise = 64 * np.finfo(float).eps * max(1.0, abs(value))
        t = 1.0
        while t > 1e-12:
            new_u, new_v = u + t * step[0], v + t * step[1]
            new_value, new_grad, new_hessian = _score_and_hessian(log_x, new_u, new_v)
            if np.isfinite(new_value) and new_value >= value + 1e-4 * t * slope - noise:
                break
            t /= 2
        else:
            break
        u, v, value, grad, hessian = new_u, new_v, new_value, new_grad, new_hessian

    if np.linalg.norm(grad) <= tolerance:
        return UgTwoParam(alpha=math.exp(u), theta=math.exp(v))

    diagnostics = {'alpha': math.exp(u), 'theta': math.exp(v), 'log_likelihood': float(value),
                   'gradient_norm': float(np.linalg.norm(grad)), 'n': n, 'max_iteration': max_iteration}
    logger.error(f"[MLE] no convergence: {diagnostics}")
    raise OptimizationError("Maximum likelihood fit did not converge", diagnostics=diagnostics)
