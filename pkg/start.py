import json
import sys
from argparse import ArgumentParser
from pathlib import Path
from typing import *

import numpy as np
import pandas as pd

from modules.data_analysis import RecordDataAnalyzer, load_observations
from modules.linear_estimation import blue_coefficients, round_coefficients, linear_estimates
from modules.moments import build_moment_table, single_moment
from modules.pivotal_mc import PivotSimulator
from modules.prediction import prediction_setup, predict
from modules.record_engine import extract_lower_k_records
from modules.study_harness import SimulationStudy, StudyConfig
from modules.utils.config_utils import load_config, override
from modules.utils.const import DEFAULT_LEVEL, DEFAULT_PROBS, DEFAULT_SEED, PIVOT_REPS, STUDY_REPS
from modules.utils.errors import USER_ERRORS, NUMERICAL_ERRORS, ParameterDomainError, InsufficientDataError, require
from modules.utils.logging_utils import get_logger, ROOT_LOGGER_NAME
from modules.utils.measurer import TimeMeasurer

SUBCOMMANDS = ('moments', 'coeffs', 'estimate', 'predict', 'pivots', 'study', 'analyze', 'tables')
FLOAT_FORMAT = '%.6g'


class UsageError(Exception):
    pass


class CliParser(ArgumentParser):
    """ArgumentParser that reports usage errors instead of exiting"""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> ArgumentParser:
    parser = CliParser(prog='start.py', description='Lower k-record inference for the unit-Gompertz family')
    parser.add_argument('--config', type=str, default=None, help='path to JSON run config')
    parser.add_argument('--log-level', type=str, default='INFO', help='logging level')
    parser.add_argument('--log-file', type=str, default=None, help='also log to this file')
    subparsers = parser.add_subparsers(dest='command', metavar='{' + ','.join(SUBCOMMANDS) + '}')
    subparsers.required = True

    def add(name: str, help_text: str, *flags: str) -> ArgumentParser:
        sub = subparsers.add_parser(name, help=help_text, description=help_text)
        if 'theta' in flags:
            sub.add_argument('--theta', type=str, default=None, help="shape, or 'argmax' / 'mle' for analyze")
        if 'k' in flags:
            sub.add_argument('--k', type=int, default=None, help='record order')
        if 'n' in flags:
            sub.add_argument('--n', type=int, default=None, help='number of records')
        if 'r' in flags:
            sub.add_argument('--r', type=float, default=None, help='moment order')
        if 'reps' in flags:
            sub.add_argument('--reps', type=int, default=None, help='Monte Carlo replications')
        if 'seed' in flags:
            sub.add_argument('--seed', type=int, default=None, help='random seed')
        if 'level' in flags:
            sub.add_argument('--level', type=float, default=None, help='interval level')
        if 'input' in flags:
            sub.add_argument('--input', type=str, required=True, help='observations file')
        if 'fidelity' in flags:
            sub.add_argument('--paper-fidelity', action='store_true',
                             help='round coefficients to the five printed decimals')
        sub.add_argument('--out', type=str, default=None, help='output file, stdout when omitted')
        sub.add_argument('--format', type=str, choices=('csv', 'json'), default=None, help='output format')
        return sub

    add('moments', 'record means, variances and r-th moments', 'theta', 'k', 'n', 'r')
    add('coeffs', 'BLUE weights and variance factors', 'theta', 'k', 'n', 'fidelity')
    add('estimate', 'BLUE and BLIE from observed data', 'theta', 'k', 'n', 'input', 'fidelity')
    add('predict', 'BLUP and BLIP of the next record', 'theta', 'k', 'n', 'input', 'fidelity')
    add('pivots', 'simulated pivot percentage points', 'theta', 'k', 'n', 'reps', 'seed', 'level')
    add('study', 'simulation study of estimators and intervals', 'theta', 'k', 'n', 'reps', 'seed', 'level')
    add('analyze', 'full analysis of an observation file', 'theta', 'k', 'n', 'input', 'seed', 'level',
        'fidelity')
    tables = add('tables', 'regenerate published tables; manifest.json (seeds, reps, timing) is written '
                           'next to the --out file, or into the --out directory when --id is omitted',
                 'reps', 'seed')
    tables.add_argument('--id', type=int, default=None, help='table number 1..12, all when omitted')
    return parser


def _number(value: Optional[str], name: str) -> Optional[float]:
    if value is None:
        return None
    try:
        return float(value)
    except ValueError:
        raise ParameterDomainError(f"--{name} must be a number, got '{value}'")


def _need(config: Dict, *keys: str):
    for key in keys:
        require(config.get(key) is not None, ParameterDomainError, f"--{key} is required")


def _emit(content: Union[pd.DataFrame, Dict], fmt: str, out: Optional[str], float_format: Optional[str] = FLOAT_FORMAT):
    if isinstance(content, pd.DataFrame) and fmt == 'csv':
        text = content.to_csv(index=False, float_format=float_format)
    elif isinstance(content, pd.DataFrame):
        text = json.dumps(content.to_dict(orient='records'), indent=2)
    else:
        text = json.dumps(content, indent=2) if fmt == 'json' else \
            pd.json_normalize(content).to_csv(index=False, float_format=float_format)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith('\n') else text + '\n')


def command_moments(config: Dict, logger) -> Tuple[pd.DataFrame, str]:
    _need(config, 'theta', 'k', 'n')
    theta, k, n = float(config['theta']), int(config['k']), int(config['n'])
    table = build_moment_table(n, k, theta)
    frame = pd.DataFrame({'i': np.arange(1, n + 1), 'mean': table.alpha, 'variance': np.diag(table.B)})
    if config.get('r') is not None:
        frame['moment'] = [single_moment(float(config['r']), i, k, theta) for i in range(1, n + 1)]
    return frame, 'csv'


def _coefficients(config: Dict):
    coeffs = blue_coefficients(build_moment_table(int(config['n']), int(config['k']), float(config['theta'])))
    return round_coefficients(coeffs) if config.get('paper_fidelity') else coeffs


def command_coeffs(config: Dict, logger) -> Tuple[Dict, str]:
    _need(config, 'theta', 'k', 'n')
    coeffs = _coefficients(config)
    return {'theta': float(config['theta']), 'k': int(config['k']), 'n': int(config['n']),
            'a': coeffs.a.tolist(), 'b': coeffs.b.tolist(), 'V1': coeffs.V1, 'V2': coeffs.V2, 'V3': coeffs.V3}, 'json'


def _observed_records(config: Dict, logger):
    _need(config, 'theta', 'k')
    series = extract_lower_k_records(load_observations(config['input']), int(config['k']))
    n = int(config.get('n') or series.n)
    require(n <= series.n, InsufficientDataError, f"n={n} records requested, {series.n} available")
    logger.info(f"[CLI] {series.n} lower {config['k']}-records extracted, using {n}")
    return series.head(n), n


def command_estimate(config: Dict, logger) -> Tuple[Dict, str]:
    records, n = _observed_records(config, logger)
    coeffs = _coefficients(override(config, n=n))
    return linear_estimates(records, coeffs).to_dict(), 'json'


def command_predict(config: Dict, logger) -> Tuple[Dict, str]:
    records, n = _observed_records(config, logger)
    setup = prediction_setup(n, int(config['k']), float(config['theta']))
    coeffs = blue_coefficients(setup.table)
    if config.get('paper_fidelity'):
        setup = setup.rounded()
        coeffs = round_coefficients(coeffs)
    estimates = linear_estimates(records, coeffs)
    return predict(records, setup, coeffs, sigma_estimate=estimates.sigma_blie).to_dict(), 'json'


def command_pivots(config: Dict, logger) -> Tuple[pd.DataFrame, str]:
    _need(config, 'theta', 'k', 'n')
    probs = list(config.get('probs', DEFAULT_PROBS))
    if config.get('level') is not None:
        gamma = 1.0 - float(config['level'])
        probs = sorted(set(probs) | {gamma / 2, 1.0 - gamma / 2})
    simulator = PivotSimulator(config, logger=logger)
    tables = simulator.quantile_tables(float(config['theta']), int(config['k']), int(config['n']),
                                       reps=int(config.get('pivot_reps', PIVOT_REPS)), probs=probs,
                                       seed=int(config.get('seed', DEFAULT_SEED)))
    return pd.concat([table.to_frame() for table in tables.values()], ignore_index=True), 'csv'


def _profiler(config: Dict) -> TimeMeasurer:
    measurer = config.get('measurer', {})
    return TimeMeasurer(measurer.get('save_path', ''), measurer.get('mode_on', False))


def command_study(config: Dict, logger) -> Tuple[pd.DataFrame, str]:
    study = SimulationStudy(config, logger=logger, profiler=_profiler(config))
    if config.get('theta') is not None or config.get('k') is not None or config.get('n') is not None:
        _need(config, 'theta', 'k', 'n')
        configs = [StudyConfig(theta=float(config['theta']), k=int(config['k']), n=int(config['n']),
                               reps=int(config.get('reps', STUDY_REPS)),
                               level=float(config.get('level', DEFAULT_LEVEL)),
                               seed=int(config.get('seed', DEFAULT_SEED)),
                               pivot_reps=int(config.get('pivot_reps', PIVOT_REPS)))]
    else:
        configs = study.grid()
    frame = study.run_grid(configs)
    study.profiler.finish_logging_time()
    return frame, 'csv'


def command_analyze(config: Dict, logger) -> Tuple[Dict, str]:
    data = load_observations(config['input'])
    analyzer = RecordDataAnalyzer(config, logger=logger, profiler=_profiler(config))
    report = analyzer.analyze(data)
    for line in report.summary_text().splitlines():
        logger.info(f"[Analysis] {line}")
    return report.to_dict(), 'json'


def command_tables(config: Dict, logger, table_id: Optional[int], out: Optional[str]) -> None:
    study = SimulationStudy(config, logger=logger, profiler=_profiler(config))
    if table_id is not None:
        path = study.reproduce_table(table_id, out)
        output_dir = path.parent
        table_ids = [table_id]
    else:
        output_dir = Path(out or config.get('output_dir', 'tables'))
        table_ids = list(range(1, 13))
        for current in table_ids:
            study.reproduce_table(current, output_dir / f"table_{current}.csv")
    manifest = study.write_manifest(table_ids, output_dir)
    logger.info(f"[CLI] manifest written to {manifest}")


COMMANDS = {'moments': command_moments, 'coeffs': command_coeffs, 'estimate': command_estimate,
            'predict': command_predict, 'pivots': command_pivots, 'study': command_study,
            'analyze': command_analyze}


def run(argv: Optional[Sequence[str]] = None, capture_warnings: bool = False) -> int:
    """
    Parse argv, dispatch to a subcommand and map errors to exit codes:
    0 success, 1 user or I/O error, 2 numerical error
    :param capture_warnings: log numpy/scipy warnings through the CLI handlers
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        sys.stderr.write(f"{parser.prog}: error: {e}\n")
        return 1

    logger = get_logger(name=ROOT_LOGGER_NAME, console=True, log_level=args.log_level.upper(),
                        log_file=args.log_file, propagate=False,
                        capture_warnings=capture_warnings)
    try:
        config = load_config(args.config, logger)
        cli_values = {key: getattr(args, key, None) for key in ('k', 'n', 'r', 'seed', 'level', 'input')}
        if getattr(args, 'theta', None) is not None:
            theta = args.theta
            cli_values['theta'] = theta if args.command == 'analyze' and theta in ('argmax', 'mle') \
                else _number(theta, 'theta')
        if getattr(args, 'reps', None) is not None:
            cli_values['pivot_reps' if args.command == 'pivots' else 'reps'] = args.reps
        if getattr(args, 'paper_fidelity', False):
            cli_values['paper_fidelity'] = True
        config = override(config, **cli_values)

        if args.command == 'tables':
            command_tables(config, logger, args.id, args.out)
            return 0
        result, default_format = COMMANDS[args.command](config, logger)
        float_format = None if args.command in ('pivots',) else FLOAT_FORMAT
        _emit(result, args.format or default_format, args.out, float_format)
        return 0
    except USER_ERRORS as e:
        logger.error(f"[CLI] {type(e).__name__}: {e}")
        return 1
    except NUMERICAL_ERRORS as e:
        logger.error(f"[CLI] {type(e).__name__}: {e}")
        return 2
    except OSError as e:
        logger.error(f"[CLI] I/O error: {e}")
        return 1


if __name__ == '__main__':
    sys.exit(run(capture_warnings=True))
