from logging import Logger
from pathlib import Path
from typing import *
import json

from modules.utils.errors import ParameterDomainError
from modules.utils.logging_utils import DEFAULT_LOGGER


def load_config(config_path: Union[str, Path, None], logger: Logger = DEFAULT_LOGGER) -> Dict:
    """
    Read a JSON run configuration
    :param config_path: path to JSON file, None gives an empty config
    :param logger: logger to report the loaded config
    :return: config dict
    """
    if config_path is None:
        return {}
    config_path = Path(config_path)
    logger.info(f"Reading config from {config_path.absolute()}")
    try:
        with open(config_path) as con_file:
            config = json.load(con_file)
    except json.JSONDecodeError as e:
        raise ParameterDomainError(f"Config {config_path} is not valid JSON: {e}")
    if not isinstance(config, dict):
        raise ParameterDomainError(f"Config {config_path} must hold a JSON object")
    logger.info(f"Using config {config}")
    return config


def override(config: Dict, **values) -> Dict:
    """Copy of config with every non-None keyword value set"""
    merged = dict(config)
    merged.update({k: v for k, v in values.items() if v is not None})
    return merged
