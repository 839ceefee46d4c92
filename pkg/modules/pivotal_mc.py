"""
Monte Carlo percentage points of the six pivotal quantities and the
confidence / prediction intervals built from them.

Pivots for standardized records (mu = 0, sigma = 1):
    T1 = mu* / (sigma* sqrt(V1))           T2 = (sigma* - 1) / sqrt(V2)
    T3 = mu~ / (sigma~ sqrt(W))            T4 = (sigma~ - 1)(1 + V2) / sqrt(V2)
    T1star = (R_n+1 - R_n) / sigma*        T2star = (R_n+1 - R_n) / sigma~
with W = V1 - V3^2 (2 + V2) / (1 + V2)^2.
"""
from dataclasses import dataclass, field
from logging import Logger
from pathlib import Path
from typing import *
import math

import numpy as np
import pandas as pd
from scipy import stats
from tqdm.auto import tqdm

from modules.linear_estimation import BlueCoefficients, LinearEstimates, coefficients_for, _record_values, \
    ArrayOrRecords
from modules.record_engine import simulate_standard_record_matrix
from modules.utils.const import PIVOT_IDS, DEFAULT_PROBS, MIN_PIVOT_REPS, PIVOT_CHUNK, PIVOT_REPS
from modules.utils.errors import ParameterDomainError, MissingQuantileError, UndefinedBoundError, \
    InsufficientDataError, DimensionError, require
from modules.utils.logging_utils import DEFAULT_LOGGER, DEFAULT_MEASURER, get_module_logger

module_logger = get_module_logger('pivotal_mc')

PROB_MATCH_TOLERANCE = 1e-9
LOCATION_PIVOTS = ('T1', 'T3')
SCALE_PIVOTS = ('T2', 'T4')
PREDICTION_PIVOTS = ('T1star', 'T2star')


@dataclass(frozen=True)
class QuantileTable:
    """
    Simulated percentage points of one pivot at one (theta, k, n)
    """
    pivot_id: str
    theta: float
    k: int
    n: int
    reps: int
    probs: Tuple[float, ...]
    quantiles: Tuple[float, ...]
    seed: Optional[int] = None

    def __post_init__(self):
        require(self.pivot_id in PIVOT_IDS, ParameterDomainError, f"unknown pivot {self.pivot_id}")
        require(len(self.probs) == len(self.quantiles), DimensionError, "one quantile per probability expected")
        object.__setattr__(self, 'probs', tuple(float(p) for p in self.probs))
        object.__setattr__(self, 'quantiles', tuple(float(q) for q in self.quantiles))

    def quantile_at(self, prob: float) -> float:
        for p, q in zip(self.probs, self.quantiles):
            if abs(p - prob) <= PROB_MATCH_TOLERANCE:
                return q
        raise MissingQuantileError(f"{self.pivot_id} table for (theta={self.theta}, k={self.k}, n={self.n}) "
                                   f"has no quantile at probability {prob:g}; available: {self.probs}")

    def matches(self, theta: float, k: int, n: int) -> bool:
        return math.isclose(self.theta, theta) and self.k == k and self.n == n

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'pivot': self.pivot_id, 'k': self.k, 'theta': self.theta, 'n': self.n,
                             'prob': list(self.probs), 'quantile': list(self.quantiles),
                             'reps': self.reps, 'seed': self.seed})


@dataclass(frozen=True)
class Interval:
    """
    Confidence interval for mu or sigma, or prediction interval for the next record
    :param raw_bounds: bounds in the order the formula produces them
    :param flags: notes such as 'reordered'
    """
    lower: float
    upper: float
    level: float
    target: str
    pivot_id: str = ''
    raw_bounds: Tuple[float, float] = (float('nan'), float('nan'))
    flags: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    def to_dict(self) -> Dict:
        return {'target': self.target, 'pivot': self.pivot_id, 'level': self.level, 'lower': self.lower,
                'upper': self.upper, 'raw_bounds': list(self.raw_bounds), 'flags': list(self.flags)}


@dataclass
class PivotSample:
    """All six pivots computed on one shared replication stream"""
    theta: float
    k: int
    n: int
    seed: Optional[int]
    values: Dict[str, np.ndarray]
    sigma_star: np.ndarray
    degenerate_count: int

    @property
    def reps(self) -> int:
        return int(self.sigma_star.size)


def _canonical(first: float, second: float, level: float, target: str, pivot_id: str) -> Interval:
    flags = ('reordered',) if first > second else ()
    return Interval(lower=min(first, second), upper=max(first, second), level=level, target=target,
                    pivot_id=pivot_id, raw_bounds=(first, second), flags=flags)


def _tail_probs(level: float) -> Tuple[float, float]:
    require(0 < level < 1, ParameterDomainError, f"level must lie in (0, 1), got {level}")
    gamma = 1.0 - level
    return gamma / 2, 1.0 - gamma / 2


def _check_table(qtable: QuantileTable, allowed: Sequence[str], coeffs: BlueCoefficients):
    require(qtable.pivot_id in allowed, ParameterDomainError,
            f"pivot {qtable.pivot_id} cannot be used here, expected one of {allowed}")
    require(qtable.n == coeffs.n, DimensionError,
            f"quantile table is for n={qtable.n}, coefficients for n={coeffs.n}")
    if not math.isnan(coeffs.theta) and coeffs.k:
        require(qtable.matches(coeffs.theta, coeffs.k, coeffs.n), ParameterDomainError,
                f"quantile table (theta={qtable.theta}, k={qtable.k}) does not match coefficients "
                f"(theta={coeffs.theta}, k={coeffs.k})")


def blie_location_factor(coeffs: BlueCoefficients) -> float:
    """sqrt(V1 - V3^2 (2 + V2) / (1 + V2)^2)"""
    return math.sqrt(coeffs.V1 - coeffs.V3 ** 2 * (2 + coeffs.V2) / (1 + coeffs.V2) ** 2)


def ci_location(estimates: LinearEstimates, coeffs: BlueCoefficients, qtable: QuantileTable,
                level: float) -> Interval:
    """
    Interval for mu from T1 (around mu*) or T3 (around mu~)
    [m - s f T(1 - gamma/2), m - s f T(gamma/2)]
    """
    _check_table(qtable, LOCATION_PIVOTS, coeffs)
    low_prob, high_prob = _tail_probs(level)
    if qtable.pivot_id == 'T1':
        centre, scale, factor = estimates.mu_blue, estimates.sigma_blue, math.sqrt(coeffs.V1)
    else:
        centre, scale, factor = estimates.mu_blie, estimates.sigma_blie, blie_location_factor(coeffs)
    first = centre - scale * factor * qtable.quantile_at(high_prob)
    second = centre - scale * factor * qtable.quantile_at(low_prob)
    return _canonical(first, second, level, 'mu', qtable.pivot_id)


def ci_scale(estimates: LinearEstimates, coeffs: BlueCoefficients, qtable: QuantileTable,
             level: float) -> Interval:
    """
    Interval for sigma from T2 (sigma* / (1 + sqrt(V2) T)) or
    T4 (sigma~ / (1 + sqrt(V2) / (1 + V2) T))
    :raises UndefinedBoundError: when a denominator is not positive
    """
    _check_table(qtable, SCALE_PIVOTS, coeffs)
    low_prob, high_prob = _tail_probs(level)
    if qtable.pivot_id == 'T2':
        estimate, factor = estimates.sigma_blue, math.sqrt(coeffs.V2)
    else:
        estimate, factor = estimates.sigma_blie, math.sqrt(coeffs.V2) / (1 + coeffs.V2)

    bounds = []
    for prob in (high_prob, low_prob):
        q = qtable.quantile_at(prob)
        denominator = 1.0 + factor * q
        if denominator <= 0:
            raise UndefinedBoundError(f"scale bound from {qtable.pivot_id}({prob:g}) = {q} has nonpositive "
                                      f"denominator {denominator}", quantile=q)
        bounds.append(estimate / denominator)
    return _canonical(bounds[0], bounds[1], level, 'sigma', qtable.pivot_id)


def pi_next_record(records: ArrayOrRecords, sigma_estimate: float, qtable: QuantileTable,
                   level: float) -> Interval:
    """
    Prediction interval [R_n + s T*(gamma/2), R_n + s T*(1 - gamma/2)] for R_n+1
    """
    require(qtable.pivot_id in PREDICTION_PIVOTS, ParameterDomainError,
            f"pivot {qtable.pivot_id} cannot be used for prediction")
    values = _record_values(records)
    require(values.size == qtable.n, DimensionError, f"{values.size} records for a table with n={qtable.n}")
    low_prob, high_prob = _tail_probs(level)
    last = float(values[-1])
    first = last + sigma_estimate * qtable.quantile_at(low_prob)
    second = last + sigma_estimate * qtable.quantile_at(high_prob)
    return _canonical(first, second, level, 'next_record', qtable.pivot_id)


def pivots_from_records(z: np.ndarray, coeffs: BlueCoefficients) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    """
    All six pivots for standardized replications
    :param z: array (reps, n + 1); the last column is the record to predict
    :return: pivot arrays and sigma* per replication
    """
    records, target = z[:, :-1], z[:, -1]
    mu_star, sigma_star = records @ coeffs.a, records @ coeffs.b
    mu_tilde = mu_star - coeffs.V3 / (1 + coeffs.V2) * sigma_star
    sigma_tilde = sigma_star / (1 + coeffs.V2)
    step = target - records[:, -1]
    with np.errstate(divide='ignore', invalid='ignore'):
        values = {
            'T1': mu_star / (sigma_star * math.sqrt(coeffs.V1)),
            'T2': (sigma_star - 1.0) / math.sqrt(coeffs.V2),
            'T3': mu_tilde / (sigma_tilde * blie_location_factor(coeffs)),
            'T4': (sigma_tilde - 1.0) * (1 + coeffs.V2) / math.sqrt(coeffs.V2),
            'T1star': step / sigma_star,
            'T2star': step / sigma_tilde,
        }
    return values, sigma_star


def order_statistic_band(samples: np.ndarray, prob: float, level: float = 0.99,
                         widen: float = math.sqrt(2)) -> Tuple[float, float]:
    """
    Distribution-free band for the prob-quantile from binomial order-statistic
    ranks. widen = sqrt(2) accounts for comparing two independent estimates
    of the same quantile rather than an estimate with the true value
    :param samples: simulated pivot values
    :param prob: quantile probability
    :param level: band coverage
    :param widen: factor applied to the rank half-widths
    :return: (lower, upper) sample order statistics
    """
    ordered = np.sort(np.asarray(samples, dtype=float))
    size = ordered.size
    require(size >= 2, InsufficientDataError, "band needs at least two samples")
    tail = (1.0 - level) / 2
    centre = size * prob
    low_rank = stats.binom.ppf(tail, size, prob)
    high_rank = stats.binom.ppf(1.0 - tail, size, prob)
    low = int(np.clip(math.floor(centre - widen * (centre - low_rank)) - 1, 0, size - 1))
    high = int(np.clip(math.ceil(centre + widen * (high_rank - centre)), 0, size - 1))
    return float(ordered[low]), float(ordered[high])



class PivotSimulator:
    """
    Simulates all six pivots on one replication stream per (theta, k, n).
    The stream is cut into fixed-size chunks, each with its own child of
    SeedSequence(seed), so results do not depend on processing order.
    :param config: optional dict with 'pivot_reps', 'chunk_size', 'probs', 'cache_dir'
    :param logger: logger to use
    """

    def __init__(self, config: Optional[Dict] = None, logger: Logger = DEFAULT_LOGGER, **kwargs):
        config = config or {}
        self.logger = logger
        self.profiler = kwargs.get('profiler', DEFAULT_MEASURER)
        self.reps = int(config.get('pivot_reps', PIVOT_REPS))
        self.chunk_size = int(config.get('chunk_size', PIVOT_CHUNK))
        self.probs = tuple(config.get('probs', DEFAULT_PROBS))
        self.cache_dir = Path(config['cache_dir']) if config.get('cache_dir') else None
        self.progress = bool(config.get('progress', False))

    def simulate(self, theta: float, k: int, n: int, reps: Optional[int] = None,
                 seed: Optional[int] = None) -> PivotSample:
        reps = int(reps or self.reps)
        require(n >= 2, InsufficientDataError, f"pivots need n >= 2 records, got {n}")
        require(reps >= 1, ParameterDomainError, f"reps must be positive, got {reps}")
        coeffs = coefficients_for(n, k, theta)

        n_chunks = math.ceil(reps / self.chunk_size)
        children = np.random.SeedSequence(seed).spawn(n_chunks)
        collected = {pivot: [] for pivot in PIVOT_IDS}
        sigma_parts = []
        self.profiler.start_measure_local('pivot_simulation')
        for index, child in enumerate(tqdm(children, desc=f"pivots theta={theta} k={k} n={n}",
                                           disable=not self.progress, leave=False)):
            size = min(self.chunk_size, reps - index * self.chunk_size)
            z = simulate_standard_record_matrix(theta, k, n + 1, size, np.random.default_rng(child))
            values, sigma_star = pivots_from_records(z, coeffs)
            for pivot in PIVOT_IDS:
                collected[pivot].append(values[pivot])
            sigma_parts.append(sigma_star)
        self.profiler.finish_measure_local()

        sigma_star = np.concatenate(sigma_parts)
        degenerate = int(np.sum(sigma_star <= 0))
        if degenerate:
            self.logger.warning(f"[PivotSimulator] {degenerate} of {reps} replications have sigma* <= 0 "
                                f"(theta={theta}, k={k}, n={n}); kept as simulated")
        return PivotSample(theta=theta, k=k, n=n, seed=seed,
                           values={pivot: np.concatenate(parts) for pivot, parts in collected.items()},
                           sigma_star=sigma_star, degenerate_count=degenerate)

    def quantile_tables(self, theta: float, k: int, n: int, reps: Optional[int] = None,
                        probs: Optional[Sequence[float]] = None,
                        seed: Optional[int] = None) -> Dict[str, QuantileTable]:
        """All six quantile tables, read from the cache directory when present"""
        reps = int(reps or self.reps)
        probs = tuple(probs or self.probs)
        require(reps >= MIN_PIVOT_REPS, ParameterDomainError,
                f"at least {MIN_PIVOT_REPS} replications are needed for interval tables, got {reps}")
        require(all(0 < p < 1 for p in probs), ParameterDomainError, "probabilities must lie in (0, 1)")

        if self.cache_dir is not None:
            cached = read_cached_tables(self.cache_dir, theta, k, n, reps, probs, seed)
            if cached is not None:
                self.logger.info(f"[PivotSimulator] using cached tables for theta={theta}, k={k}, n={n}")
                return cached

        sample = self.simulate(theta, k, n, reps, seed)
        tables = quantile_tables_from_sample(sample, probs)
        if self.cache_dir is not None:
            write_quantile_tables(tables.values(), self.cache_dir)
        return tables


def quantile_tables_from_sample(sample: PivotSample, probs: Sequence[float]) -> Dict[str, QuantileTable]:
    """Type-7 (linear interpolation) quantiles of every pivot of a sample"""
    tables = {}
    for pivot in PIVOT_IDS:
        quantiles = np.quantile(sample.values[pivot], probs)
        tables[pivot] = QuantileTable(pivot_id=pivot, theta=sample.theta, k=sample.k, n=sample.n,
                                      reps=sample.reps, probs=tuple(probs), quantiles=tuple(quantiles),
                                      seed=sample.seed)
    return tables


def simulate_pivot_quantiles(pivot_id: str, theta: float, k: int, n: int, reps: int,
                             probs: Sequence[float], seed: Optional[int]) -> QuantileTable:
    """
    Percentage points of one pivot from reps standardized replications
    :param pivot_id: one of T1, T2, T3, T4, T1star, T2star
    """
    require(pivot_id in PIVOT_IDS, ParameterDomainError, f"unknown pivot {pivot_id}")
    simulator = PivotSimulator({'pivot_reps': reps, 'probs': probs}, logger=module_logger)
    return simulator.quantile_tables(theta, k, n, reps, probs, seed)[pivot_id]


def cache_path(directory: Union[str, Path], pivot_id: str, k: int, theta: float, n: int) -> Path:
    return Path(directory) / f"{pivot_id}_{k}_{theta:g}_{n}.csv"


def write_quantile_tables(tables: Iterable[QuantileTable], directory: Union[str, Path]):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for table in tables:
        table.to_frame().to_csv(cache_path(directory, table.pivot_id, table.k, table.theta, table.n),
                                index=False, float_format='%.17g')


def read_quantile_table(path: Union[str, Path]) -> QuantileTable:
    frame = pd.read_csv(path, float_precision='round_trip')
    first = frame.iloc[0]
    seed = None if pd.isna(first['seed']) else int(first['seed'])
    return QuantileTable(pivot_id=str(first['pivot']), theta=float(first['theta']), k=int(first['k']),
                         n=int(first['n']), reps=int(first['reps']), probs=tuple(frame['prob']),
                         quantiles=tuple(frame['quantile']), seed=seed)


def read_cached_tables(directory: Union[str, Path], theta: float, k: int, n: int, reps: int,
                       probs: Sequence[float], seed: Optional[int]) -> Optional[Dict[str, QuantileTable]]:
    tables = {}
    for pivot in PIVOT_IDS:
        path = cache_path(directory, pivot, k, theta, n)
        if not path.exists():
            return None
        table = read_quantile_table(path)
        same_probs = len(table.probs) == len(probs) and all(
            abs(a - b) <= PROB_MATCH_TOLERANCE for a, b in zip(table.probs, probs))
        if table.reps != reps or table.seed != seed or not same_probs:
            return None
        tables[pivot] = table
    return tables


def tables_from_wide_frame(frame: pd.DataFrame, k: int, theta: float, n: int,
                           reps: int = PIVOT_REPS) -> Dict[str, QuantileTable]:
    """
    Quantile tables from a wide layout with columns like 'T1_0.025'
    (the layout of published percentage-point tables)
    """
    row = frame[(frame['k'] == k) & np.isclose(frame['theta'], theta) & (frame['n'] == n)]
    require(len(row) == 1, MissingQuantileError, f"no row for k={k}, theta={theta}, n={n}")
    row = row.iloc[0]
    tables = {}
    for pivot in PIVOT_IDS:
        columns = [c for c in frame.columns if c.startswith(f"{pivot}_")]
        if not columns:
            continue
        probs = [float(c.split('_', 1)[1]) for c in columns]
        order = np.argsort(probs)
        tables[pivot] = QuantileTable(pivot_id=pivot, theta=theta, k=k, n=n, reps=reps,
                                      probs=tuple(probs[i] for i in order),
                                      quantiles=tuple(float(row[columns[i]]) for i in order))
    return tables
