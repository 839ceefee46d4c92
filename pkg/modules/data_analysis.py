"""
Real-data pipeline: goodness of fit of the two-parameter form, shape
selection by record/mean correlation, then estimation, prediction and
intervals from the observed lower k-records.
"""
from dataclasses import dataclass, field
from logging import Logger
from pathlib import Path
from typing import *
import json
import math

import numpy as np
import pandas as pd
from scipy import stats

from modules.linear_estimation import LinearEstimates, blue_coefficients, round_coefficients, linear_estimates
from modules.moments import single_moment
from modules.pivotal_mc import (Interval, PivotSimulator, QuantileTable, ci_location, ci_scale, pi_next_record,
                                tables_from_wide_frame, LOCATION_PIVOTS, SCALE_PIVOTS, PREDICTION_PIVOTS)
from modules.prediction import PredictionResult, prediction_setup, predict
from modules.record_engine import RecordSeries, extract_lower_k_records
from modules.ug_distribution import UgTwoParam, cdf_two_param, fit_mle, _check_unit_data
from modules.utils.const import THETA_GRID, DEFAULT_LEVEL, DEFAULT_SEED, PIVOT_REPS, TABLE_DIGITS
from modules.utils.errors import (UgRecordsError, InsufficientDataError, ParameterDomainError,
                                  UndefinedCorrelationError, require)
from modules.utils.logging_utils import DEFAULT_LOGGER, DEFAULT_MEASURER

EXACT_KS_LIMIT = 100
THETA_CHOICES = ('argmax', 'mle')


@dataclass
class AnalysisReport:
    """
    Outcome of one analysis; a stage that failed leaves its fields empty
    and its message under errors[stage]
    """
    k: int
    n: int
    theta: float
    theta_source: str
    level: float
    records: List[float]
    observed_next: Optional[float] = None
    ks: Optional[Tuple[float, float]] = None
    mle: Optional[UgTwoParam] = None
    theta_diag: List[Tuple[float, float]] = field(default_factory=list)
    estimates: Optional[LinearEstimates] = None
    prediction: Optional[PredictionResult] = None
    intervals: List[Interval] = field(default_factory=list)
    paper_fidelity: bool = False
    errors: Dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            'k': self.k, 'n': self.n, 'theta': self.theta, 'theta_source': self.theta_source,
            'level': self.level, 'paper_fidelity': self.paper_fidelity,
            'records': list(self.records), 'observed_next': self.observed_next,
            'ks': None if self.ks is None else {'statistic': self.ks[0], 'p_value': self.ks[1]},
            'mle': None if self.mle is None else {'alpha': self.mle.alpha, 'theta': self.mle.theta},
            'theta_diag': [{'theta': t, 'correlation': c} for t, c in self.theta_diag],
            'estimates': None if self.estimates is None else self.estimates.to_dict(),
            'prediction': None if self.prediction is None else self.prediction.to_dict(),
            'intervals': [interval.to_dict() for interval in self.intervals],
            'errors': dict(self.errors),
        }

    def summary_text(self) -> str:
        lines = [f"lower {self.k}-records ({len(self.records)}): " + ", ".join(f"{v:.6g}" for v in self.records),
                 f"theta = {self.theta:.6g} ({self.theta_source}), n = {self.n}, level = {self.level:g}"]
        if self.ks is not None:
            lines.append(f"K-S: D = {self.ks[0]:.6g}, p = {self.ks[1]:.6g}"
                         + (f" (alpha = {self.mle.alpha:.6g}, theta = {self.mle.theta:.6g})" if self.mle else ""))
        for theta, correlation in self.theta_diag:
            lines.append(f"  corr(records, means | theta = {theta:g}) = {correlation:.6g}")
        if self.estimates is not None:
            e = self.estimates
            lines.append(f"BLUE: mu* = {e.mu_blue:.6g}, sigma* = {e.sigma_blue:.6g}")
            lines.append(f"BLIE: mu~ = {e.mu_blie:.6g}, sigma~ = {e.sigma_blie:.6g}")
        if self.prediction is not None:
            p = self.prediction
            lines.append(f"BLUP = {p.blup:.6g} (MSPE {p.mspe_blup:.6g} sigma^2), "
                         f"BLIP = {p.blip:.6g} (MSPE {p.mspe_blip:.6g} sigma^2)")
            if self.observed_next is not None:
                lines.append(f"observed next record = {self.observed_next:.6g}")
        for interval in self.intervals:
            note = " [bounds reordered]" if 'reordered' in interval.flags else ""
            lines.append(f"{interval.level:.0%} interval for {interval.target} from {interval.pivot_id}: "
                         f"({interval.lower:.6g}, {interval.upper:.6g}){note}")
        for stage, message in self.errors.items():
            lines.append(f"{stage} failed: {message}")
        return "\n".join(lines)


def ks_test(data: Sequence[float], params: UgTwoParam) -> Tuple[float, float]:
    """
    One-sample two-sided Kolmogorov-Smirnov test against the two-parameter cdf
    :return: (D, p); p from the exact distribution up to 100 observations
    """
    x = _check_unit_data(data)
    method = 'exact' if x.size <= EXACT_KS_LIMIT else 'asymp'
    result = stats.kstest(x, lambda values: cdf_two_param(values, params), method=method)
    return float(result.statistic), float(result.pvalue)


def _record_means(count: int, k: int, theta: float, digits: Optional[int]) -> np.ndarray:
    means = np.array([single_moment(1, i, k, theta) for i in range(1, count + 1)])
    return np.round(means, digits) if digits is not None else means


def theta_diagnostic(records: Union[RecordSeries, Sequence[float]], theta_grid: Sequence[float] = THETA_GRID,
                     digits: Optional[int] = None, k: Optional[int] = None) -> List[Tuple[float, float]]:
    """
    Pearson correlation between the observed records and the exact record
    means for each candidate shape
    :param records: at least 3 lower k-records
    :param theta_grid: candidate shapes
    :param digits: round the means as printed tables do
    :param k: record order, taken from records when they are a RecordSeries
    :raises UndefinedCorrelationError: if either side has zero variance
    """
    if isinstance(records, RecordSeries):
        k = records.k
    require(k is not None and int(k) == k and k >= 1, ParameterDomainError, f"k must be >= 1, got {k}")
    values = np.asarray(getattr(records, "values", records), dtype=float).ravel()
    require(values.size >= 3, InsufficientDataError,
            f"the correlation diagnostic needs at least 3 records, got {values.size}")
    if np.ptp(values) == 0:
        raise UndefinedCorrelationError("all records are equal, correlation is undefined")
    diagnostic = []
    for theta in theta_grid:
        means = _record_means(values.size, int(k), float(theta), digits)
        if np.ptp(means) == 0:
            raise UndefinedCorrelationError(f"record means are constant for theta={theta}")
        correlation = float(stats.pearsonr(values, means)[0])
        diagnostic.append((float(theta), float(np.clip(correlation, -1.0, 1.0))))
    return diagnostic


def _choose_theta(theta: Union[float, str, None], diagnostic: List[Tuple[float, float]],
                  mle: Optional[UgTwoParam]) -> Tuple[float, str]:
    if theta is None or theta == 'argmax':
        require(bool(diagnostic), InsufficientDataError, "no correlation diagnostic to choose theta from")
        best = max(diagnostic, key=lambda item: item[1])
        return best[0], 'argmax'
    if theta == 'mle':
        require(mle is not None, InsufficientDataError, "no maximum likelihood fit to take theta from")
        return mle.theta, 'mle'
    require(not isinstance(theta, str), ParameterDomainError,
            f"theta must be a number or one of {THETA_CHOICES}, got '{theta}'")
    theta = float(theta)
    require(theta > 0, ParameterDomainError, f"theta must be positive, got {theta}")
    return theta, 'assumed'


def _intervals(records: np.ndarray, estimates: LinearEstimates, coeffs, tables: Dict[str, QuantileTable],
               level: float, errors: Dict[str, str], logger: Logger) -> List[Interval]:
    intervals = []
    builders = [(pivot, lambda t: ci_location(estimates, coeffs, t, level)) for pivot in LOCATION_PIVOTS] + \
               [(pivot, lambda t: ci_scale(estimates, coeffs, t, level)) for pivot in SCALE_PIVOTS] + \
               [('T1star', lambda t: pi_next_record(records, estimates.sigma_blue, t, level)),
                ('T2star', lambda t: pi_next_record(records, estimates.sigma_blie, t, level))]
    for pivot, build in builders:
        if pivot not in tables:
            errors[f'interval_{pivot}'] = f"no quantile table for {pivot}"
            continue
        try:
            interval = build(tables[pivot])
        except UgRecordsError as e:
            errors[f'interval_{pivot}'] = str(e)
            logger.warning(f"[Analysis] {pivot} interval failed: {e}")
            continue
        if 'reordered' in interval.flags:
            logger.warning(f"[Analysis] {pivot} interval bounds came out as {interval.raw_bounds} "
                           f"and were reordered")
        intervals.append(interval)
    return intervals


def analyze(data: Sequence[float], k: int, theta: Union[float, str, None] = None, level: float = DEFAULT_LEVEL,
            n: Optional[int] = None, theta_grid: Sequence[float] = THETA_GRID, paper_fidelity: bool = False,
            quantile_tables: Optional[Dict[str, QuantileTable]] = None,
            simulator: Optional[PivotSimulator] = None, seed: Optional[int] = DEFAULT_SEED,
            logger: Logger = DEFAULT_LOGGER) -> AnalysisReport:
    """
    Full analysis of one observation sequence
    :param data: observations in arrival order
    :param k: record order
    :param theta: shape; a number, 'argmax' (best correlation, also used for None) or 'mle'
    :param level: interval level
    :param n: records used for estimation; all but the last one by default so it can be predicted
    :param theta_grid: candidate shapes for the correlation diagnostic
    :param paper_fidelity: round coefficients and moments to the printed five decimals
    :param quantile_tables: pivot tables to use instead of simulated ones
    :param simulator: pivot simulator for the tables that are not given
    :param seed: seed for simulated pivot tables
    :raises InsufficientDataError: if fewer than 2 records can be extracted
    :raises ParameterDomainError: on an unknown theta rule; failures after record extraction are
        reported under errors[stage] instead
    """
    require(0 < level < 1, ParameterDomainError, f"level must lie in (0, 1), got {level}")
    series = extract_lower_k_records(data, k)
    require(series.n >= 2, InsufficientDataError,
            f"only {series.n} lower {k}-record(s) in the data, at least 2 are needed")
    if n is None:
        n = series.n - 1 if series.n >= 3 else series.n
    require(2 <= n <= series.n, InsufficientDataError,
            f"n={n} records requested, {series.n} available")
    require(not isinstance(theta, str) or theta in THETA_CHOICES, ParameterDomainError,
            f"theta must be a number or one of {THETA_CHOICES}, got '{theta}'")
    require(theta is None or isinstance(theta, str) or float(theta) > 0, ParameterDomainError,
            f"theta must be positive, got {theta}")
    errors: Dict[str, str] = {}
    digits = TABLE_DIGITS if paper_fidelity else None

    mle, ks = None, None
    try:
        mle = fit_mle(data)
        ks = ks_test(data, mle)
        logger.info(f"[Analysis] MLE alpha={mle.alpha:.6g}, theta={mle.theta:.6g}; K-S D={ks[0]:.6g}, "
                    f"p={ks[1]:.6g}")
    except UgRecordsError as e:
        errors['fit'] = str(e)
        logger.warning(f"[Analysis] goodness-of-fit stage failed: {e}")

    grid = [float(t) for t in theta_grid]
    if isinstance(theta, (int, float)) and not any(math.isclose(theta, t) for t in grid):
        grid.append(float(theta))
    if theta == 'mle' and mle is not None:
        grid.append(mle.theta)
    diagnostic = []
    try:
        diagnostic = theta_diagnostic(series, grid, digits)
    except UgRecordsError as e:
        errors['diagnostic'] = str(e)
        logger.warning(f"[Analysis] correlation diagnostic failed: {e}")

    records = series.head(n)
    report = AnalysisReport(k=int(k), n=n, theta=float('nan'), theta_source='unresolved', level=level,
                            records=[float(v) for v in series.values], ks=ks, mle=mle, theta_diag=diagnostic,
                            observed_next=float(series.values[n]) if series.n > n else None,
                            paper_fidelity=paper_fidelity, errors=errors)

    try:
        report.theta, report.theta_source = _choose_theta(theta, diagnostic, mle)
        logger.info(f"[Analysis] using theta={report.theta:.6g} ({report.theta_source}) with n={n} "
                    f"of {series.n} records")
        setup = prediction_setup(n, k, report.theta)
        coeffs = blue_coefficients(setup.table)
        if paper_fidelity:
            setup = setup.rounded(TABLE_DIGITS)
            coeffs = round_coefficients(coeffs, TABLE_DIGITS)
        report.estimates = linear_estimates(records, coeffs)
    except UgRecordsError as e:
        errors['estimation'] = str(e)
        logger.error(f"[Analysis] estimation failed: {e}")
        return report

    try:
        report.prediction = predict(records, setup, coeffs, sigma_estimate=report.estimates.sigma_blie)
    except UgRecordsError as e:
        errors['prediction'] = str(e)
        logger.error(f"[Analysis] prediction failed: {e}")

    try:
        tables = dict(quantile_tables or {})
        missing = [pivot for pivot in LOCATION_PIVOTS + SCALE_PIVOTS + PREDICTION_PIVOTS if pivot not in tables]
        if missing:
            simulator = simulator or PivotSimulator({'pivot_reps': PIVOT_REPS}, logger=logger)
            gamma = 1.0 - level
            simulated = simulator.quantile_tables(report.theta, k, n, probs=(gamma / 2, 1.0 - gamma / 2),
                                                  seed=seed)
            tables.update({pivot: simulated[pivot] for pivot in missing})
        report.intervals = _intervals(np.asarray(records.values), report.estimates, coeffs, tables, level,
                                      errors, logger)
    except UgRecordsError as e:
        errors['intervals'] = str(e)
        logger.error(f"[Analysis] interval stage failed: {e}")
    return report


def load_observations(path: Union[str, Path]) -> np.ndarray:
    """
    Read observations from plain text or CSV: one value per line or comma
    separated, optionally under a header line
    :raises ParameterDomainError: on unparsable values or values outside (0, 1)
    """
    lines = [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]
    values = []
    for number, line in enumerate(lines):
        tokens = [token.strip() for token in line.replace(';', ',').replace('\t', ',').split(',') if token.strip()]
        try:
            values.extend(float(token) for token in tokens)
        except ValueError:
            if number == 0:
                continue
            raise ParameterDomainError(f"{path}:{number + 1}: cannot parse '{line}'")
    data = np.array(values, dtype=float)
    require(data.size > 0, InsufficientDataError, f"no observations in {path}")
    require(bool(np.all(np.isfinite(data) & (data > 0) & (data < 1))), ParameterDomainError,
            f"observations in {path} must lie strictly inside (0, 1)")
    return data


def load_quantile_tables(paths: Sequence[Union[str, Path]], k: int, theta: float, n: int,
                         reps: int = PIVOT_REPS) -> Dict[str, QuantileTable]:
    """Pivot tables taken from published wide-layout CSVs (columns like 'T1_0.025')"""
    tables = {}
    for path in paths:
        tables.update(tables_from_wide_frame(pd.read_csv(path, float_precision='round_trip'), k, theta, n, reps))
    return tables


class RecordDataAnalyzer:
    """
    Config-driven front end of analyze for the command line
    :param config: dict; keys 'k', 'theta', 'n', 'level', 'theta_grid', 'paper_fidelity',
        'pivot_reps', 'seed', 'cache_dir', 'quantile_table_files'
    :param logger: logger to use
    """

    def __init__(self, config: Optional[Dict] = None, logger: Logger = DEFAULT_LOGGER, **kwargs):
        self.config = config or {}
        self.logger = logger
        self.profiler = kwargs.get('profiler', DEFAULT_MEASURER)
        self.simulator = PivotSimulator({'pivot_reps': self.config.get('pivot_reps', PIVOT_REPS),
                                         'cache_dir': self.config.get('cache_dir')},
                                        logger=logger, profiler=self.profiler)

    def analyze(self, data: Sequence[float]) -> AnalysisReport:
        config = self.config
        k = int(config.get('k', 2))
        theta = config.get('theta')
        level = float(config.get('level', DEFAULT_LEVEL))
        quantile_tables = None
        if config.get('quantile_table_files'):
            require(isinstance(theta, (int, float)), ParameterDomainError,
                    "published quantile tables need an explicit theta")
            series = extract_lower_k_records(data, k)
            n = config.get('n') or (series.n - 1 if series.n >= 3 else series.n)
            quantile_tables = load_quantile_tables(config['quantile_table_files'], k, float(theta), int(n))
        with self.profiler.measure('analysis'):
            return analyze(data, k, theta=theta, level=level, n=config.get('n'),
                           theta_grid=config.get('theta_grid', THETA_GRID),
                           paper_fidelity=bool(config.get('paper_fidelity', False)),
                           quantile_tables=quantile_tables, simulator=self.simulator,
                           seed=config.get('seed', DEFAULT_SEED), logger=self.logger)

    def write_report(self, report: AnalysisReport, output_path: Union[str, Path, None], fmt: str = 'json') -> str:
        require(fmt in ('json', 'text'), ParameterDomainError, f"unknown report format {fmt}")
        content = json.dumps(report.to_dict(), indent=2) if fmt == 'json' else report.summary_text()
        if output_path:
            output_path = Path(output_path)
            output_path.parent.mkdir(parents=True, exist_ok=True)
            output_path.write_text(content + "\n")
            self.logger.info(f"[Analysis] report written to {output_path}")
        return content
