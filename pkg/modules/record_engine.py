"""
Lower k-record values: streaming extraction from observation sequences,
direct simulation through exponential spacings, and the joint density.
"""
from dataclasses import dataclass, field
from typing import *
import heapq
import math

import numpy as np

from modules.ug_distribution import UgParams, sample
from modules.utils.errors import ParameterDomainError, InsufficientDataError, require
from modules.utils.logging_utils import get_module_logger

logger = get_module_logger('record_engine')

EXTRACTION_CHUNK = 4096
MAX_STREAM_LENGTH = 10 ** 9


@dataclass(frozen=True)
class RecordSeries:
    """
    Lower k-record values R_1(k) > R_2(k) > ... > R_n(k)
    :param k: record order, >= 1
    :param values: strictly decreasing record values
    :param source_index: positions in the raw stream where each record was set
    """
    k: int
    values: np.ndarray
    source_index: Optional[Tuple[int, ...]] = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)
        require(int(self.k) == self.k and self.k >= 1, ParameterDomainError, f"k must be >= 1, got {self.k}")
        require(values.size >= 1, InsufficientDataError, "a record series holds at least one value")
        require(bool(np.all(np.diff(values) < 0)), ParameterDomainError, "record values must strictly decrease")
        if self.source_index is not None:
            index = tuple(int(i) for i in self.source_index)
            require(len(index) == values.size, ParameterDomainError,
                    "source_index must have one entry per record")
            require(all(a < b for a, b in zip(index, index[1:])), ParameterDomainError,
                    "source_index must strictly increase")
            object.__setattr__(self, 'source_index', index)

    @property
    def n(self) -> int:
        return int(self.values.size)

    def __len__(self):
        return self.n

    def head(self, n: int) -> 'RecordSeries':
        """First n records"""
        require(1 <= n <= self.n, InsufficientDataError, f"series has {self.n} records, asked for {n}")
        index = self.source_index[:n] if self.source_index is not None else None
        return RecordSeries(self.k, self.values[:n], index)


class LowerKRecordTracker:
    """
    Single-pass k-record extractor keeping only the k smallest values seen.
    The first record is the maximum of the first k observations; after that
    a record is set whenever the k-th smallest value strictly decreases.
    :param k: record order
    """

    def __init__(self, k: int):
        require(int(k) == k and k >= 1, ParameterDomainError, f"k must be >= 1, got {k}")
        self.k = int(k)
        self._heap: List[float] = []  # negated k smallest values
        self.seen = 0
        self.values: List[float] = []
        self.source_index: List[int] = []

    @property
    def threshold(self) -> float:
        """Current k-th smallest value, +inf before k observations"""
        return -self._heap[0] if len(self._heap) == self.k else math.inf

    def push(self, x: float) -> bool:
        """Feed one observation, return True if it set a new record"""
        index = self.seen
        self.seen += 1
        if len(self._heap) < self.k:
            heapq.heappush(self._heap, -x)
            if len(self._heap) == self.k:
                self._emit(index)
                return True
            return False
        current = -self._heap[0]
        if x < current:
            heapq.heapreplace(self._heap, -x)
            if -self._heap[0] < current:
                self._emit(index)
                return True
        return False

    def push_many(self, xs: np.ndarray):
        """Feed a block of observations; values at or above the threshold are skipped in bulk"""
        xs = np.asarray(xs, dtype=float).ravel()
        start = self.seen
        position = 0
        while position < xs.size and len(self._heap) < self.k:
            self.push(float(xs[position]))
            position += 1
        if position < xs.size:
            # the threshold only decreases, so this candidate set is a superset of what matters
            candidates = np.flatnonzero(xs[position:] < self.threshold) + position
            for c in candidates:
                self.seen = start + int(c)
                self.push(float(xs[c]))
        self.seen = start + xs.size

    def _emit(self, index: int):
        self.values.append(-self._heap[0])
        self.source_index.append(index)

    def series(self) -> RecordSeries:
        require(len(self.values) >= 1, InsufficientDataError,
                f"fewer than k={self.k} observations, no record yet")
        return RecordSeries(self.k, np.array(self.values), tuple(self.source_index))


def extract_lower_k_records(data: Sequence[float], k: int) -> RecordSeries:
    """
    Lower k-records of an observation sequence
    :param data: observations in arrival order, at least k of them
    :param k: record order
    :return: records with the stream positions where they were set
    """
    require(int(k) == k and k >= 1, ParameterDomainError, f"k must be >= 1, got {k}")
    data = np.asarray(data, dtype=float).ravel()
    require(data.size >= k, InsufficientDataError, f"need at least k={k} observations, got {data.size}")
    tracker = LowerKRecordTracker(k)
    tracker.push_many(data)
    return tracker.series()


def _resolve_params(theta: float, p: Optional[UgParams]) -> UgParams:
    if p is None:
        return UgParams.standard(theta)
    require(math.isclose(p.theta, theta), ParameterDomainError,
            f"theta={theta} disagrees with the shape of {p}")
    return p


def _check_counts(k: int, n: int):
    require(int(k) == k and k >= 1, ParameterDomainError, f"k must be >= 1, got {k}")
    require(int(n) == n and n >= 1, ParameterDomainError, f"n must be >= 1, got {n}")


def simulate_standard_record_matrix(theta: float, k: int, n: int, reps: int,
                                    rng: np.random.Generator) -> np.ndarray:
    """
    reps independent standardized record sequences, one per row.
    -ln F(Z_j(k)) are partial sums of exponentials with rate k, so
    Z_j = (1 + W_j)^(-1/theta)
    :return: array of shape (reps, n)
    """
    _check_counts(k, n)
    require(theta > 0, ParameterDomainError, f"theta must be positive, got {theta}")
    spacings = rng.standard_exponential(size=(int(reps), int(n))) / k
    return (1.0 + np.cumsum(spacings, axis=1)) ** (-1.0 / theta)


def simulate_k_records(theta: float, k: int, n: int, p: Optional[UgParams] = None,
                       seed: Union[int, np.random.Generator, None] = None) -> RecordSeries:
    """
    One sequence of n lower k-records from the unit-Gompertz law
    :param theta: shape
    :param k: record order
    :param n: number of records
    :param p: location/scale (and matching shape); standardized when None
    :param seed: integer seed or generator
    """
    p = _resolve_params(theta, p)
    z = simulate_standard_record_matrix(p.theta, k, n, 1, np.random.default_rng(seed))[0]
    return RecordSeries(k, p.from_standard(z))


def simulate_k_records_by_extraction(theta: float, k: int, n: int, p: Optional[UgParams] = None,
                                     seed: Union[int, np.random.Generator, None] = None,
                                     chunk: int = EXTRACTION_CHUNK) -> RecordSeries:
    """
    Records obtained the slow way: draw an i.i.d. stream in chunks and run
    the streaming extractor until n records exist
    """
    p = _resolve_params(theta, p)
    _check_counts(k, n)
    rng = np.random.default_rng(seed)
    tracker = LowerKRecordTracker(k)
    while len(tracker.values) < n:
        require(tracker.seen < MAX_STREAM_LENGTH, InsufficientDataError,
                f"stream of {tracker.seen} draws produced only {len(tracker.values)} records")
        tracker.push_many(sample(chunk, p, rng))
    logger.debug(f"[Records] {len(tracker.values)} lower {k}-records after {tracker.seen} draws")
    return tracker.series().head(n)


def record_joint_log_density(series: RecordSeries, p: UgParams) -> float:
    """
    Log joint density of the first n lower k-records
    n ln k + k ln F(z_n) + sum(ln f(z_i) - ln F(z_i)) - n ln sigma
    """
    z = p.standardize(series.values)
    require(bool(np.all((z > 0) & (z < 1))), ParameterDomainError, "records must lie inside the support")
    n = z.size
    log_z = np.log(z)
    # ln f - ln F = ln theta - (theta + 1) ln z
    hazard_terms = n * math.log(p.theta) - (p.theta + 1.0) * log_z.sum()
    log_cdf_last = -math.expm1(-p.theta * log_z[-1])
    return float(n * math.log(series.k) + series.k * log_cdf_last + hazard_terms - n * math.log(p.sigma))
