"""
Utility Handlers - Configuration and logging helpers for the command line

Settings are resolved as defaults < environment (.env aware) < config file <
command-line flags.
"""
import os
import logging
from dataclasses import fields, replace
from typing import Callable, Dict, Optional

from dotenv import dotenv_values, load_dotenv

from ..states.app_state import CliConfig
from ..states.errors import UsageError

logger = logging.getLogger(__name__)

TRUE_WORDS = ("1", "true", "yes", "on")
FALSE_WORDS = ("0", "false", "no", "off")


def parse_bool(text: str) -> bool:
    """Parse a yes/no style flag value"""
    word = str(text).strip().lower()
    if word in TRUE_WORDS:
        return True
    if word in FALSE_WORDS:
        return False
    raise ValueError(f"not a boolean: '{text}'")


def parse_floats(text: str) -> tuple:
    """Parse a comma separated list of reals"""
    return tuple(float(part) for part in str(text).split(",") if part.strip())


def parse_names(text: str) -> tuple:
    """Parse a comma separated list of names"""
    return tuple(part.strip() for part in str(text).split(",") if part.strip())


ENV_KEYS: Dict[str, tuple] = {
    'HDLSS_SEED': ('seed', int),
    'HDLSS_THREADS': ('threads', int),
    'HDLSS_REPS': ('reps', int),
    'HDLSS_LOG_LEVEL': ('log_level', str),
    'HDLSS_OUT': ('out', str),
    'HDLSS_FULL_PRECISION': ('full_precision', parse_bool),
}

CONFIG_KEYS: Dict[str, Callable[[str], object]] = {
    'model': str,
    'd': int,
    'n': int,
    'm': int,
    'n_test': int,
    'k': int,
    'reps': int,
    'seed': int,
    'threads': int,
    'beta': float,
    'a': float,
    'center': parse_bool,
    'full_precision': parse_bool,
    'rotate_frame': parse_bool,
    'estimators': parse_names,
    'estimator': str,
    'sigma_sq': parse_floats,
    'probs': parse_floats,
    'out': str,
    'log_level': str,
}


def load_environment_config():
    """
    Load environment configuration variables

    Only variables that are set appear in the result.

    :return: Dictionary of CliConfig field name to typed value
    """
    load_dotenv()

    config = {}
    for env_key, (name, parse) in ENV_KEYS.items():
        raw = os.getenv(env_key)
        if raw is None or raw == "":
            continue
        try:
            config[name] = parse(raw)
        except ValueError as e:
            raise UsageError(f"invalid {env_key}={raw!r}: {e}") from e
    return config


def load_config_file(path: str):
    """
    Load a flat key = value config file

    :param path: Path to the config file
    :return: Dictionary of CliConfig field name to typed value
    """
    if not os.path.isfile(path):
        raise UsageError(f"config file not found: {path}")

    config = {}
    for key, raw in dotenv_values(path).items():
        name = key.strip().lower().replace("-", "_")
        if name not in CONFIG_KEYS:
            raise UsageError(f"{path}: unknown key '{key}'")
        if raw is None:
            raise UsageError(f"{path}: key '{key}' has no value")
        try:
            config[name] = CONFIG_KEYS[name](raw)
        except ValueError as e:
            raise UsageError(f"{path}: invalid value for '{key}': {e}") from e
    logger.debug(f"Loaded {len(config)} settings from {path}")
    return config


def resolve_config(flags: Dict[str, object], env: Optional[Dict[str, object]] = None,
                   file_values: Optional[Dict[str, object]] = None) -> CliConfig:
    """
    Merge the configuration layers into one CliConfig

    None values in a layer leave the lower layer untouched.

    :param flags: Values from the command line
    :param env: Values from the environment
    :param file_values: Values from the config file
    :return: Resolved CliConfig
    """
    known = {f.name for f in fields(CliConfig)}
    config = CliConfig()
    for layer in (env or {}, file_values or {}, flags):
        updates = {key: value for key, value in layer.items() if value is not None}
        unknown = set(updates) - known
        if unknown:
            raise UsageError(f"unknown settings: {sorted(unknown)}")
        config = replace(config, **updates)
    for name in ("estimators", "sigma_sq", "probs"):
        value = getattr(config, name)
        if value is not None:
            config = replace(config, **{name: tuple(value)})
    return config


def setup_logging(level=logging.INFO):
    """
    Setup logging configuration

    :param level: Logging level name or number (default: INFO)
    """
    if isinstance(level, str):
        numeric = logging.getLevelName(level.upper())
        if not isinstance(numeric, int):
            raise UsageError(f"unknown log level '{level}'")
        level = numeric
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
