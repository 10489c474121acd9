#!/usr/bin/env python3
"""
Krylov Lab Utilities Module

Shared constants, the exception hierarchy, and experiment configuration
loading used across the linop, krylov, cg, spectral and CLI modules.
"""

import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

# Numerical tolerances shared across modules
BREAKDOWN_TOL = 1e-13
INTERSECTION_TOL = 1e-8
CLASS_CHECK_TOL = 1e-10
PSD_TOL = 1e-10
REPORT_THRESHOLD = 1e-6
PINV_CUTOFF = 1e-12
ORACLE_MAX_DIM = 2000
DEFAULT_BOUNDARY_MARGIN = 8

SEED_ENV_VAR = "KRYLOVLAB_SEED"
SCHEMA_VERSION = "1.0"

TASKS = ["solve", "diagnose", "profile", "reproduce-examples"]
SOLVE_METHODS = ["cg-psd", "selfadjoint-square", "skewadjoint-square", "spectral", "oracle"]
OUTPUT_FORMATS = ["json", "csv"]

# Problem parameters a config may carry; each gallery builder picks the ones it accepts
PROBLEM_PARAMS = ["M", "n_grid", "n_quad", "decay"]


class KrylovLabError(Exception):
    """Base class for all errors raised by krylovlab."""


class DimensionError(KrylovLabError, ValueError):
    """Vectors or operators from different truncated spaces were combined."""


class ParameterError(KrylovLabError, ValueError):
    """A constructor, solver or diagnostic parameter is out of range."""


class ConfigError(ParameterError):
    """The experiment configuration is malformed."""


class UnsupportedOperationError(KrylovLabError):
    """The operator kind cannot represent the requested action."""


class EmptyBasisError(KrylovLabError, ValueError):
    """A Krylov basis was requested for the zero vector."""


class WrongOperatorClassError(KrylovLabError):
    """The operator failed a symmetry, skew-symmetry or definiteness check."""


class IndefiniteOperatorError(WrongOperatorClassError):
    """CG met negative curvature."""


class OracleUnavailableError(KrylovLabError):
    """A dense oracle was requested for an operator that is too large."""


class EvaluationError(KrylovLabError, ValueError):
    """A spectral function is undefined at an atom carrying weight."""


class NotInRangeError(KrylovLabError):
    """The datum has a significant component outside the operator's range."""


# Exit codes of the CLI
EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

VALIDATION_ERRORS = (
    ParameterError,
    DimensionError,
    WrongOperatorClassError,
    UnsupportedOperationError,
    EmptyBasisError,
)
NUMERICAL_ERRORS = (NotInRangeError, EvaluationError, OracleUnavailableError)


def exit_code_for(error: KrylovLabError) -> int:
    """
    Map a krylovlab error to the CLI exit code.

    Args:
        error: Raised error

    Returns:
        EXIT_VALIDATION for bad input or wrong operator class, EXIT_NUMERICAL otherwise
    """
    if isinstance(error, VALIDATION_ERRORS):
        return EXIT_VALIDATION
    return EXIT_NUMERICAL


@dataclass
class ExperimentConfig:
    """One experiment: problem, task, solver and diagnostics options, output."""

    problem: str = "right-shift"
    M: int | None = None
    n_grid: int | None = None
    n_quad: int | None = None
    decay: float | None = None
    task: str = "diagnose"
    method: str = "selfadjoint-square"
    max_iter: int | None = None
    rtol: float = 1e-10
    Ns: list[int] = field(default_factory=lambda: [5, 10, 20])
    tol: float = INTERSECTION_TOL
    boundary_margin: int = DEFAULT_BOUNDARY_MARGIN
    output: str | None = None
    format: str = "json"
    seed: int | None = None

    def problem_params(self) -> dict:
        """Problem parameters that were set explicitly."""
        return {name: getattr(self, name) for name in PROBLEM_PARAMS if getattr(self, name) is not None}

    def to_dict(self) -> dict:
        return asdict(self)


CONFIG_KEYS = [f.name for f in fields(ExperimentConfig)]

_NUMERIC_KEYS = {
    "M": int,
    "n_grid": int,
    "n_quad": int,
    "decay": float,
    "max_iter": int,
    "rtol": float,
    "tol": float,
    "boundary_margin": int,
    "seed": int,
}


def _as_int(value, name: str) -> int:
    """Integer value of a config entry; rejects booleans and fractional numbers."""
    if isinstance(value, bool):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if isinstance(value, float):
        if not float(value).is_integer():
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        return int(value)
    try:
        return int(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{name} must be an integer, got {value!r}") from e


def load_config_file(config_path: str) -> dict:
    """
    Load a flat key-value experiment config from a YAML or JSON file.

    Args:
        config_path: Path to the config file

    Returns:
        Dictionary of config values as written in the file

    Raises:
        ConfigError: If the file is missing, unreadable, nested, or has unknown keys
    """
    path = Path(config_path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {config_path}")

    try:
        with open(path, encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"Could not parse config file {config_path}: {e}") from e

    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {config_path} must hold a flat mapping")

    unknown = sorted(set(data) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")

    for key, value in data.items():
        if isinstance(value, dict) or (isinstance(value, list) and key != "Ns"):
            raise ConfigError(f"Config key '{key}' must be a scalar value")

    return data


def parse_ns(value) -> list[int]:
    """
    Parse a list of Krylov orders.

    Args:
        value: Comma-separated string ("5,10,20") or a list of integers

    Returns:
        Sorted list of distinct positive integers
    """
    if isinstance(value, str):
        parts = [p.strip() for p in value.split(",") if p.strip()]
    elif isinstance(value, list | tuple):
        parts = list(value)
    else:
        raise ConfigError(f"Ns must be a list or comma-separated string, got {value!r}")

    ns = sorted({_as_int(p, "Ns entry") for p in parts})

    if not ns or ns[0] < 1:
        raise ConfigError(f"Ns must contain positive integers: {value!r}")
    return ns


def resolve_seed(seed: int | None) -> int:
    """Explicit seed, else the KRYLOVLAB_SEED environment variable, else 0."""
    if seed is not None:
        return _as_int(seed, "seed")

    env_value = os.environ.get(SEED_ENV_VAR)
    if env_value is None or env_value.strip() == "":
        return 0
    try:
        return int(env_value)
    except ValueError as e:
        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env_value!r}") from e


def build_config(file_values: dict | None = None, flag_values: dict | None = None) -> ExperimentConfig:
    """
    Merge config-file values and command-line flags into a validated config.

    Flags that were given (not None) override file values, which override defaults.

    Args:
        file_values: Values from load_config_file
        flag_values: Values from command-line flags; None means "not given"

    Returns:
        Validated ExperimentConfig with the seed resolved
    """
    merged = dict(file_values or {})
    for key, value in (flag_values or {}).items():
        if key not in CONFIG_KEYS:
            raise ConfigError(f"Unknown config key: {key}")
        if value is not None:
            merged[key] = value

    if "Ns" in merged:
        merged["Ns"] = parse_ns(merged["Ns"])

    # YAML reads exponent floats such as 1e-10 as strings
    for key, kind in _NUMERIC_KEYS.items():
        if merged.get(key) is not None:
            if kind is int:
                merged[key] = _as_int(merged[key], f"Config key '{key}'")
                continue
            try:
                merged[key] = kind(merged[key])
            except (TypeError, ValueError) as e:
                raise ConfigError(f"Config key '{key}' must be {kind.__name__}, got {merged[key]!r}") from e

    try:
        config = ExperimentConfig(**merged)
    except TypeError as e:
        raise ConfigError(str(e)) from e

    if config.task not in TASKS:
        raise ConfigError(f"Unknown task '{config.task}'. Choose from: {', '.join(TASKS)}")
    if config.method not in SOLVE_METHODS:
        raise ConfigError(f"Unknown method '{config.method}'. Choose from: {', '.join(SOLVE_METHODS)}")
    if config.format not in OUTPUT_FORMATS:
        raise ConfigError(f"Unknown format '{config.format}'. Choose from: {', '.join(OUTPUT_FORMATS)}")
    if config.rtol <= 0 or config.tol <= 0:
        raise ConfigError("rtol and tol must be positive")
    if config.max_iter is not None and config.max_iter < 1:
        raise ConfigError("max_iter must be at least 1")
    if config.boundary_margin < 0:
        raise ConfigError("boundary_margin must be nonnegative")

    config.seed = resolve_seed(config.seed)
    return config
