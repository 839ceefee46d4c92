from typing import *
import logging
from pathlib import Path
from datetime import datetime
import csv

from modules.utils.measurer import TimeMeasurer

DEFAULT_MEASURER = TimeMeasurer()

DEFAULT_FORMAT_PARAMS = dict(
    fmt='[{asctime}][{name}][{levelname}] {message}',
    datefmt='%Y-%m-%d %H:%M:%S',
    style='{'
)

ROOT_LOGGER_NAME = 'UG_RECORDS'

DEFAULT_LOGGER = logging.getLogger(f"{ROOT_LOGGER_NAME}.default")


def _attach(logger: logging.Logger, handler: logging.Handler, log_level: Union[str, int]):
    handler.setFormatter(logging.Formatter(**DEFAULT_FORMAT_PARAMS))
    handler.setLevel(log_level)
    logger.addHandler(handler)


def get_logger(name: str,
               log_level: Union[str, int] = None,
               console: bool = False,
               log_file: Union[str, Path] = None,
               additional_handlers: bool = False,
               propagate: bool = True,
               capture_warnings: bool = False) -> logging.Logger:
    """
    Get logger based on settings.
    Loggers named f"{ROOT_LOGGER_NAME}.{component}" pass their records to
    the root logger configured by the CLI
    :param name: name of logger
    :param log_level: level of logging str ("INFO") or int (0, 10, 20 ..)
    :param console: log to console (stderr) or not
    :param log_file: if set -> will log to specific file
    :param additional_handlers: add handlers even they exist
    :param propagate: send records to parent
    :param capture_warnings: route warnings.warn output (scipy IntegrationWarning,
        numpy RuntimeWarning) through the same handlers
    :return: configured logger
    """
    log_level = log_level or "NOTSET"
    logger = logging.getLogger(name)
    logger.propagate = propagate
    if not logger.handlers or additional_handlers:
        if log_file:
            log_file = Path(log_file)
            log_file.parent.mkdir(parents=True, exist_ok=True)
            _attach(logger, logging.FileHandler(log_file), log_level)
        if console:
            _attach(logger, logging.StreamHandler(), log_level)
        logger.setLevel(log_level)
    if capture_warnings:
        logging.captureWarnings(True)
        warnings_logger = logging.getLogger('py.warnings')
        for handler in logger.handlers:
            if handler not in warnings_logger.handlers:
                warnings_logger.addHandler(handler)
    return logger


def get_module_logger(component: str) -> logging.Logger:
    """Child logger of the project root logger for a library module"""
    return logging.getLogger(f"{ROOT_LOGGER_NAME}.{component}")


class CSVLogger:
    """
    Appends one row per finished study grid point to a date-stamped CSV
    :param config: dict with 'log_file_path' (directory prefix)
    """
    fields = ["datetime", "table", "k", "theta", "n", "reps", "seed", "time_spend", "failures"]

    def __init__(self, config: Dict):
        date_string = datetime.today().strftime('%Y-%m-%d')
        self.file_path = Path(f"{config['log_file_path']}study_log_{date_string}.csv")
        self.file_path.parent.mkdir(parents=True, exist_ok=True)
        if not self.file_path.exists():
            with open(self.file_path, 'w', newline='') as outfile:
                writer = csv.writer(outfile)
                writer.writerow(self.fields)

    def add_log(self, log_attributes: Dict):
        log_string = [log_attributes.get(f) for f in self.fields]
        with open(self.file_path, 'a', newline='') as outfile:
            writer = csv.writer(outfile)
            writer.writerow(log_string)
