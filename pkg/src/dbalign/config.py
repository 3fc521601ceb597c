"""Module implements loading and validation of the dbalign configuration."""
from __future__ import annotations
from typing import TYPE_CHECKING

import os
import json
import logging
from dataclasses import dataclass, replace

from dbalign.errors import ParameterError

if TYPE_CHECKING:
    from typing import Dict, Any, Optional

LOG: logging.Logger = logging.getLogger("dbalign.config")

THREADS_ENV: str = 'DBALIGN_THREADS'

LOG_LEVELS: Dict[str, int] = {
    'critical': logging.CRITICAL,
    'error': logging.ERROR,
    'warning': logging.WARNING,
    'info': logging.INFO,
    'debug': logging.DEBUG,
}


@dataclass(frozen=True)
class Settings:
    """
    Active configuration of the command line front end.

    Attributes:
        log_level (str): Level of the dbalign loggers.
        numeric_log_level (str): Level of the quadrature diagnostics channel.
        threads (int): Worker threads used by the Monte Carlo engine.
        k_max (int): Truncation of the infimum over k in the type-I bound.
        quad_rel_tol (float): Relative tolerance requested from the quadrature.
        confidence (float): Confidence level of the reported upper limits.
    """
    log_level: str = 'warning'
    numeric_log_level: str = 'warning'
    threads: int = 1
    k_max: int = 40
    quad_rel_tol: float = 1e-10
    confidence: float = 0.95


def default_threads() -> int:
    """
    Returns the thread count taken from the DBALIGN_THREADS environment variable, or 1.

    Raises:
        ParameterError: If the variable is set but is not a positive integer.
    """
    value: Optional[str] = os.environ.get(THREADS_ENV)
    if value is None or value.strip() == '':
        return 1
    try:
        threads = int(value)
    except ValueError as err:
        raise ParameterError(f'{THREADS_ENV} must be an integer, got {value!r}') from err
    if threads < 1:
        raise ParameterError(f'{THREADS_ENV} must be at least 1')
    return threads


def settings_from_dict(config: Dict[str, Any]) -> Settings:
    """
    Builds validated settings from the "dbalign" section of a configuration.

    Args:
        config (Dict[str, Any]): The section content. Missing keys keep their defaults.

    Returns:
        Settings: The active configuration.

    Raises:
        ParameterError: If a value is outside its allowed range.
    """
    active_config: Dict[str, Any] = {'threads': default_threads()}
    known: set[str] = set(Settings.__dataclass_fields__)  # pylint: disable=no-member
    for key, value in config.items():
        if key not in known:
            LOG.warning('Ignoring unknown configuration key %s', key)
            continue
        active_config[key] = value

    for key in ('log_level', 'numeric_log_level'):
        if key in active_config and str(active_config[key]).lower() not in LOG_LEVELS:
            raise ParameterError(f'{key} must be one of {", ".join(LOG_LEVELS)}')
        if key in active_config:
            active_config[key] = str(active_config[key]).lower()
    if int(active_config['threads']) < 1:
        raise ParameterError('threads must be at least 1')
    if 'k_max' in active_config and not 1 <= int(active_config['k_max']) <= 64:
        raise ParameterError('k_max must be in 1..64')
    if 'quad_rel_tol' in active_config and not 0.0 < float(active_config['quad_rel_tol']) < 1.0:
        raise ParameterError('quad_rel_tol must be in (0, 1)')
    if 'confidence' in active_config and not 0.0 < float(active_config['confidence']) < 1.0:
        raise ParameterError('confidence must be in (0, 1)')

    settings = replace(Settings(), **active_config)
    LOG.info('Loaded dbalign configuration %s', settings)
    return settings


def load_settings(path: Optional[str] = None) -> Settings:
    """
    Loads settings from a JSON file with a top-level "dbalign" object.

    Args:
        path (Optional[str]): Path of the configuration file. Without a path only the
            defaults and the environment are used.

    Returns:
        Settings: The active configuration.

    Raises:
        ParameterError: If the file is not valid JSON or lacks the "dbalign" object.
        FileNotFoundError: If the file does not exist.
    """
    if path is None:
        return settings_from_dict({})
    with open(path, encoding='utf-8') as config_file:
        try:
            config: Any = json.load(config_file)
        except json.JSONDecodeError as err:
            raise ParameterError(f'Configuration {path} is not valid JSON: {err}') from err
    if not isinstance(config, dict) or 'dbalign' not in config or not isinstance(config['dbalign'], dict):
        raise ParameterError(f'Configuration {path} needs a top-level "dbalign" object')
    return settings_from_dict(config['dbalign'])
