"""
Simulation study of the estimators, predictors and intervals (estimated
bias, mean squared error, interval average length and coverage) and
regeneration of every published table as CSV.
"""
from dataclasses import dataclass, asdict, fields
from datetime import datetime
from logging import Logger
from pathlib import Path
from typing import *
import json
import math
import time

import numpy as np
import pandas as pd
from tqdm.auto import tqdm

from modules.linear_estimation import blue_coefficients, coefficient_frame
from modules.moments import moment_table_frame, covariance_frame
from modules.pivotal_mc import PivotSimulator, QuantileTable, blie_location_factor
from modules.prediction import prediction_setup, v4, prediction_rec, _PredictionTerms
from modules.record_engine import simulate_standard_record_matrix
from modules.utils.const import (K_GRID, THETA_GRID, N_GRID, MOMENT_N_MAX, DEFAULT_PROBS, DEFAULT_LEVEL,
                                 DEFAULT_SEED, PIVOT_REPS, STUDY_REPS, MIN_STUDY_REPS, TABLE_DIGITS,
                                 MC_TABLE_DIGITS)
from modules.utils.errors import ParameterDomainError, UgRecordsError, require
from modules.utils.logging_utils import DEFAULT_LOGGER, DEFAULT_MEASURER, CSVLogger
from modules.utils.measurer import TimeMeasurer

EXACT_TABLES = (1, 2, 3, 4, 5, 8)
PIVOT_TABLES = {6: ('T1', 'T2'), 7: ('T3', 'T4'), 9: ('T1star', 'T2star')}
STUDY_TABLES = (10, 11, 12)
INTERVAL_KEYS = ('ci_mu_T1', 'ci_mu_T3', 'ci_sigma_T2', 'ci_sigma_T4', 'pi_T1star', 'pi_T2star')

# published values that first-principles computation does not reproduce
PUBLISHED_INCONSISTENCIES = {
    'table_8': "REC rows are printed identically for k=1, 2, 3 although V factors differ across k; "
               "only the k=1 block matches the MSPE formulas",
    'table_11': "coverage probabilities are printed as 1.0000 for nominal 95% intervals; "
                "measured coverage is reported instead",
    'example_mspe': "the worked example prints MSPE(BLUP)=0.001251258 and MSPE(BLIP)=0.001099848, "
                    "which the MSPE formulas do not give for the same records (0.00348 and 0.00333 in "
                    "units of sigma^2, consistent with the simulated EMSPEs)",
    'example_scale_ci': "the worked example prints the T2-based interval for sigma with lower > upper",
}


def point_seeds(seed: int, theta: float, k: int, n: int) -> Tuple[int, int]:
    """(pivot table seed, replication seed), both derived from seed and the grid point"""
    sequence = np.random.SeedSequence([int(seed), int(k), int(n), int(round(theta * 1000))])
    pivot_child, data_child = sequence.spawn(2)
    return int(pivot_child.generate_state(1)[0]), int(data_child.generate_state(1)[0])


@dataclass(frozen=True)
class StudyConfig:
    """
    One grid point of the simulation study; truth is mu = 0, sigma = 1
    """
    theta: float
    k: int
    n: int
    reps: int = STUDY_REPS
    level: float = DEFAULT_LEVEL
    seed: int = DEFAULT_SEED
    pivot_reps: int = PIVOT_REPS

    def __post_init__(self):
        require(self.theta > 0, ParameterDomainError, f"theta must be positive, got {self.theta}")
        require(int(self.k) == self.k and self.k >= 1, ParameterDomainError, f"k must be >= 1, got {self.k}")
        require(int(self.n) == self.n and self.n >= 2, ParameterDomainError, f"n must be >= 2, got {self.n}")
        require(self.reps >= MIN_STUDY_REPS, ParameterDomainError,
                f"at least {MIN_STUDY_REPS} replications are needed, got {self.reps}")
        require(0 < self.level < 1, ParameterDomainError, f"level must lie in (0, 1), got {self.level}")

    def seeds(self) -> Tuple[int, int]:
        return point_seeds(self.seed, self.theta, self.k, self.n)


@dataclass(frozen=True)
class StudyRow:
    theta: float
    k: int
    n: int
    reps: int
    eb_mu_blue: float
    emse_mu_blue: float
    eb_sigma_blue: float
    emse_sigma_blue: float
    eb_mu_blie: float
    emse_mu_blie: float
    eb_sigma_blie: float
    emse_sigma_blie: float
    eb_blup: float
    emspe_blup: float
    eb_blip: float
    emspe_blip: float
    al_ci_mu_T1: float
    cp_ci_mu_T1: float
    al_ci_mu_T3: float
    cp_ci_mu_T3: float
    al_ci_sigma_T2: float
    cp_ci_sigma_T2: float
    al_ci_sigma_T4: float
    cp_ci_sigma_T4: float
    al_pi_T1star: float
    cp_pi_T1star: float
    al_pi_T2star: float
    cp_pi_T2star: float
    failures: int = 0
    degenerate_sigma: int = 0

    def to_dict(self) -> Dict:
        return asdict(self)


def _mean(values: np.ndarray) -> float:
    return math.fsum(values) / values.size if values.size else float('nan')


def _bias_and_mse(estimates: np.ndarray, truth: float) -> Tuple[float, float]:
    errors = estimates - truth
    return _mean(errors), _mean(errors ** 2)


def _length_and_coverage(lower: np.ndarray, upper: np.ndarray, truth: Union[float, np.ndarray]) -> Tuple[float, float]:
    low, high = np.minimum(lower, upper), np.maximum(lower, upper)
    covered = ((low <= truth) & (truth <= high)).astype(float)
    return _mean(high - low), _mean(covered)


class SimulationStudy:
    """
    Runs study grid points and regenerates published tables
    :param config: dict; keys 'reps', 'pivot_reps', 'level', 'seed', 'k_grid', 'theta_grid',
        'n_grid', 'log_file_path', 'measurer'
    :param logger: logger to use
    """

    def __init__(self, config: Optional[Dict] = None, logger: Logger = DEFAULT_LOGGER, **kwargs):
        self.config = config or {}
        self.logger = logger
        measurer_config = self.config.get('measurer', {})
        self.profiler = kwargs.get('profiler') or (
            TimeMeasurer(measurer_config.get('save_path', ''), measurer_config.get('mode_on', False))
            if measurer_config else DEFAULT_MEASURER)
        self.simulator = kwargs.get('simulator') or PivotSimulator(
            {'pivot_reps': self.config.get('pivot_reps', PIVOT_REPS), 'cache_dir': self.config.get('cache_dir'),
             'probs': self.config.get('probs', DEFAULT_PROBS)}, logger=logger, profiler=self.profiler)
        self.file_logger = CSVLogger(self.config) if self.config.get('log_file_path') else None
        self.failures_total = 0
        self.progress = bool(self.config.get('progress', False))

    # ---------------------------------------------------------------- study
    def grid(self) -> List[StudyConfig]:
        return [StudyConfig(theta=float(theta), k=int(k), n=int(n),
                            reps=int(self.config.get('reps', STUDY_REPS)),
                            level=float(self.config.get('level', DEFAULT_LEVEL)),
                            seed=int(self.config.get('seed', DEFAULT_SEED)),
                            pivot_reps=int(self.config.get('pivot_reps', PIVOT_REPS)))
                for k in self.config.get('k_grid', K_GRID)
                for theta in self.config.get('theta_grid', THETA_GRID)
                for n in self.config.get('n_grid', N_GRID)]

    def run_study(self, config: StudyConfig) -> StudyRow:
        """
        Aggregates estimator, predictor and interval performance over
        config.reps standardized replications
        """
        start = time.time()
        pivot_seed, data_seed = config.seeds()
        gamma = 1.0 - config.level
        probs = tuple(sorted({gamma / 2, 1.0 - gamma / 2}))
        tables = self.simulator.quantile_tables(config.theta, config.k, config.n, reps=config.pivot_reps,
                                                probs=probs, seed=pivot_seed)

        setup = prediction_setup(config.n, config.k, config.theta)
        coeffs = blue_coefficients(setup.table)
        terms = _PredictionTerms(setup, coeffs)
        shift = terms.v4 / (1 + coeffs.V2)

        self.profiler.start_measure_local('replications')
        z = simulate_standard_record_matrix(config.theta, config.k, config.n + 1, config.reps,
                                            np.random.default_rng(data_seed))
        records, target = z[:, :-1], z[:, -1]
        alpha = np.asarray(setup.table.alpha)
        mu_star, sigma_star = records @ coeffs.a, records @ coeffs.b
        mu_tilde = mu_star - coeffs.V3 / (1 + coeffs.V2) * sigma_star
        sigma_tilde = sigma_star / (1 + coeffs.V2)
        residual = records - mu_star[:, None] - sigma_star[:, None] * alpha
        blup = mu_star + setup.alpha_next * sigma_star + residual @ terms.b_inv_omega
        blip = blup - shift * sigma_star
        self.profiler.finish_measure_local()

        finite = np.isfinite(mu_star) & np.isfinite(sigma_star) & np.isfinite(blup)
        failures = int(np.sum(~finite))
        degenerate = int(np.sum(sigma_star <= 0))

        values = {}
        for name, estimates, truth in (('mu_blue', mu_star, 0.0), ('sigma_blue', sigma_star, 1.0),
                                       ('mu_blie', mu_tilde, 0.0), ('sigma_blie', sigma_tilde, 1.0)):
            values[f'eb_{name}'], values[f'emse_{name}'] = _bias_and_mse(estimates[finite], truth)
        values['eb_blup'], values['emspe_blup'] = _bias_and_mse((blup - target)[finite], 0.0)
        values['eb_blip'], values['emspe_blip'] = _bias_and_mse((blip - target)[finite], 0.0)

        intervals, interval_failures = self._interval_bounds(tables, coeffs, config.level, mu_star, sigma_star,
                                                              mu_tilde, sigma_tilde, records[:, -1])
        failures += interval_failures
        truths = {'ci_mu_T1': 0.0, 'ci_mu_T3': 0.0, 'ci_sigma_T2': 1.0, 'ci_sigma_T4': 1.0,
                  'pi_T1star': target, 'pi_T2star': target}
        for key in INTERVAL_KEYS:
            if key in intervals:
                lower, upper = intervals[key]
                truth = truths[key][finite] if isinstance(truths[key], np.ndarray) else truths[key]
                values[f'al_{key}'], values[f'cp_{key}'] = _length_and_coverage(lower[finite], upper[finite], truth)
            else:
                values[f'al_{key}'], values[f'cp_{key}'] = float('nan'), float('nan')

        row = StudyRow(theta=config.theta, k=config.k, n=config.n, reps=config.reps, failures=failures,
                       degenerate_sigma=degenerate, **values)
        self.failures_total += failures
        if failures:
            self.logger.warning(f"[Study] {failures} failed replication(s) at theta={config.theta}, "
                                f"k={config.k}, n={config.n}")
        if self.file_logger is not None:
            self.file_logger.add_log({'datetime': str(datetime.now()), 'table': 'study', 'k': config.k,
                                      'theta': config.theta, 'n': config.n, 'reps': config.reps,
                                      'seed': config.seed, 'time_spend': f"{time.time() - start:.3f}",
                                      'failures': failures})
        return row

    def _interval_bounds(self, tables: Dict[str, QuantileTable], coeffs, level: float,
                         mu_star, sigma_star, mu_tilde, sigma_tilde, last_record):
        low_prob, high_prob = (1 - level) / 2, 1 - (1 - level) / 2
        q = {pivot: (table.quantile_at(low_prob), table.quantile_at(high_prob)) for pivot, table in tables.items()}
        bounds = {}
        failures = 0

        factor = math.sqrt(coeffs.V1)
        bounds['ci_mu_T1'] = (mu_star - sigma_star * factor * q['T1'][1], mu_star - sigma_star * factor * q['T1'][0])
        factor = blie_location_factor(coeffs)
        bounds['ci_mu_T3'] = (mu_tilde - sigma_tilde * factor * q['T3'][1],
                              mu_tilde - sigma_tilde * factor * q['T3'][0])

        for key, pivot, estimate, factor in (
                ('ci_sigma_T2', 'T2', sigma_star, math.sqrt(coeffs.V2)),
                ('ci_sigma_T4', 'T4', sigma_tilde, math.sqrt(coeffs.V2) / (1 + coeffs.V2))):
            denominators = [1.0 + factor * q[pivot][1], 1.0 + factor * q[pivot][0]]
            if min(denominators) <= 0:
                self.logger.warning(f"[Study] {pivot} quantiles give a nonpositive scale-bound denominator "
                                    f"{min(denominators):.4g}; interval skipped")
                failures += sigma_star.size
                continue
            bounds[key] = (estimate / denominators[0], estimate / denominators[1])

        bounds['pi_T1star'] = (last_record + sigma_star * q['T1star'][0], last_record + sigma_star * q['T1star'][1])
        bounds['pi_T2star'] = (last_record + sigma_tilde * q['T2star'][0],
                               last_record + sigma_tilde * q['T2star'][1])
        return bounds, failures

    def run_grid(self, configs: Optional[Sequence[StudyConfig]] = None) -> pd.DataFrame:
        configs = list(configs) if configs is not None else self.grid()
        self.profiler.begin_sample('study')
        rows = []
        for config in tqdm(configs, desc='study', disable=not self.progress):
            try:
                rows.append(self.run_study(config).to_dict())
            except UgRecordsError as e:
                self.logger.error(f"[Study] grid point theta={config.theta}, k={config.k}, n={config.n} "
                                  f"failed: {e}")
        self.profiler.end_sample()
        return pd.DataFrame(rows, columns=[f.name for f in fields(StudyRow)])

    # --------------------------------------------------------------- tables
    def table_frame(self, table_id: int) -> pd.DataFrame:
        """In-memory frame of one published table"""
        require(1 <= int(table_id) <= 12, ParameterDomainError, f"table id must be 1..12, got {table_id}")
        k_grid = self.config.get('k_grid', K_GRID)
        theta_grid = self.config.get('theta_grid', THETA_GRID)
        n_grid = self.config.get('n_grid', N_GRID)
        n_max = int(self.config.get('n_max', MOMENT_N_MAX))

        if table_id == 1:
            return moment_table_frame(k_grid, theta_grid, n_max).round(TABLE_DIGITS)
        if table_id == 2:
            return covariance_frame(k_grid, theta_grid, n_max).round(TABLE_DIGITS)
        if table_id in (3, 4):
            frame = coefficient_frame(k_grid, theta_grid, n_grid)
            column = 'a' if table_id == 3 else 'b'
            return frame[['k', 'theta', 'n', 'i', column]].round({column: TABLE_DIGITS})
        if table_id == 5:
            return self._variance_factor_frame(k_grid, theta_grid, n_grid)
        if table_id == 8:
            return self._rec_frame(k_grid, theta_grid, n_grid)
        if table_id in PIVOT_TABLES:
            return self._pivot_frame(PIVOT_TABLES[table_id], k_grid, theta_grid, n_grid)
        return self._study_frame(table_id)

    def _variance_factor_frame(self, k_grid, theta_grid, n_grid) -> pd.DataFrame:
        rows = []
        for k in k_grid:
            for theta in theta_grid:
                for n in n_grid:
                    setup = prediction_setup(n, k, theta)
                    coeffs = blue_coefficients(setup.table)
                    rows.append({'k': k, 'theta': theta, 'n': n, 'V1': coeffs.V1, 'V2': coeffs.V2,
                                 'V3': coeffs.V3, 'V4': v4(setup, coeffs)})
        return pd.DataFrame(rows).round({'V1': TABLE_DIGITS, 'V2': TABLE_DIGITS, 'V3': TABLE_DIGITS,
                                         'V4': TABLE_DIGITS})

    def _rec_frame(self, k_grid, theta_grid, n_grid) -> pd.DataFrame:
        rows = [{'k': k, 'n': n, 'theta': theta, 'rec': prediction_rec(n, k, theta)}
                for k in k_grid for n in n_grid for theta in theta_grid]
        return pd.DataFrame(rows).round({'rec': TABLE_DIGITS})

    def _pivot_frame(self, pivots: Sequence[str], k_grid, theta_grid, n_grid) -> pd.DataFrame:
        probs = tuple(self.config.get('probs', DEFAULT_PROBS))
        reps = int(self.config.get('pivot_reps', PIVOT_REPS))
        seed = int(self.config.get('seed', DEFAULT_SEED))
        rows = []
        points = [(k, theta, n) for k in k_grid for theta in theta_grid for n in n_grid]
        for k, theta, n in tqdm(points, desc='pivot tables', disable=not self.progress):
            point_seed = point_seeds(seed, theta, k, n)[0]
            tables = self.simulator.quantile_tables(theta, k, n, reps=reps, probs=probs, seed=point_seed)
            row = {'k': k, 'theta': theta, 'n': n}
            for pivot in pivots:
                for prob, value in zip(tables[pivot].probs, tables[pivot].quantiles):
                    row[f"{pivot}_{prob:g}"] = round(value, MC_TABLE_DIGITS)
            row['seed'] = point_seed
            rows.append(row)
        return pd.DataFrame(rows)

    def _study_frame(self, table_id: int) -> pd.DataFrame:
        frame = self.run_grid()
        keys = ['k', 'theta', 'n']
        if table_id == 10:
            columns = ['eb_mu_blue', 'emse_mu_blue', 'eb_sigma_blue', 'emse_sigma_blue',
                       'eb_mu_blie', 'emse_mu_blie', 'eb_sigma_blie', 'emse_sigma_blie']
        elif table_id == 11:
            columns = [f'{measure}_{key}' for key in INTERVAL_KEYS[:4] for measure in ('al', 'cp')]
            self.logger.warning(f"[Study] {PUBLISHED_INCONSISTENCIES['table_11']}")
        else:
            columns = ['eb_blup', 'emspe_blup', 'eb_blip', 'emspe_blip'] + \
                      [f'{measure}_{key}' for key in INTERVAL_KEYS[4:] for measure in ('al', 'cp')]
        frame = frame[keys + columns + ['reps', 'failures']].copy()
        frame[columns] = frame[columns].round(MC_TABLE_DIGITS)
        frame['seed'] = int(self.config.get('seed', DEFAULT_SEED))
        return frame

    def reproduce_table(self, table_id: int, output_path: Union[str, Path, None] = None) -> Path:
        """
        Write one published table as CSV
        :param table_id: 1..12
        :param output_path: file to write, default tables/table_<id>.csv under config 'output_dir'
        :return: path written
        """
        output_path = Path(output_path) if output_path else \
            Path(self.config.get('output_dir', 'tables')) / f"table_{table_id}.csv"
        self.profiler.begin_sample(f'table_{table_id}')
        with self.profiler.measure('build'):
            frame = self.table_frame(table_id)
        self.profiler.end_sample()
        if table_id == 8:
            self.logger.warning(f"[Study] {PUBLISHED_INCONSISTENCIES['table_8']}")
        output_path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(output_path, index=False)
        self.logger.info(f"[Study] table {table_id} written to {output_path} ({len(frame)} rows)")
        return output_path

    def write_manifest(self, table_ids: Sequence[int], output_dir: Union[str, Path]) -> Path:
        """Seeds, replication counts, tolerances, timing and known published inconsistencies"""
        manifest = {
            'created': datetime.now().isoformat(timespec='seconds'),
            'tables': [f"table_{t}.csv" for t in table_ids],
            'seed': int(self.config.get('seed', DEFAULT_SEED)),
            'study_reps': int(self.config.get('reps', STUDY_REPS)),
            'pivot_reps': int(self.config.get('pivot_reps', PIVOT_REPS)),
            'level': float(self.config.get('level', DEFAULT_LEVEL)),
            'tolerances': {'exact_tables': 5e-5, 'mc_tables': 'order-statistic band, 99%, sqrt(2) widened'},
            'failures': self.failures_total,
            'published_inconsistencies': PUBLISHED_INCONSISTENCIES,
            'timing': self.profiler.as_dict(),
        }
        path = Path(output_dir) / 'manifest.json'
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w') as handle:
            json.dump(manifest, handle, indent=2)
        self.profiler.finish_logging_time()
        return path


def run_study(config: StudyConfig, logger: Logger = DEFAULT_LOGGER) -> StudyRow:
    """Single grid point with a fresh simulator"""
    return SimulationStudy({'pivot_reps': config.pivot_reps}, logger=logger).run_study(config)


def reproduce_table(table_id: int, output_path: Union[str, Path], config: Optional[Dict] = None,
                    logger: Logger = DEFAULT_LOGGER) -> Path:
    """Write one published table (1..12) as CSV"""
    return SimulationStudy(config, logger=logger).reproduce_table(table_id, output_path)
