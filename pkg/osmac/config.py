"""
TOML configuration for the osmac command line.

Lookup order: explicit ``--config`` path, ``osmac.toml`` in the current
directory, then the ``OSMAC_CONFIG`` environment variable. Explicit CLI flags
override file values, which override the built-in defaults.
"""

from __future__ import annotations

import os
import sys
from pathlib import Path
from typing import Any

from osmac.errors import ConfigError
from osmac.glm import SolverConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CONFIG_FILENAME = "osmac.toml"
CONFIG_ENV_VAR = "OSMAC_CONFIG"

DEFAULTS: dict[str, dict[str, Any]] = {
    "solver": {"tol": 1e-8, "max_iter": 100, "divergence_norm": 1e8},
    "bench": {"threads": 1, "reps": 100, "seed": 0, "r0": 200, "format": "json"},
    "ssp": {"floor": 0.0, "mx_source": "full_data"},
}

VALIDATIONS: dict[str, list[tuple[str, Any, Any]]] = {
    "solver": [
        ("tol", (int, float), lambda x: x > 0),
        ("max_iter", int, lambda x: x >= 1),
        ("divergence_norm", (int, float), lambda x: x > 0),
    ],
    "bench": [
        ("threads", int, lambda x: x >= 1),
        ("reps", int, lambda x: x >= 1),
        ("seed", int, lambda x: x >= 0),
        ("r0", int, lambda x: x >= 1),
        ("format", str, ["json", "csv"]),
    ],
    "ssp": [
        ("floor", (int, float), lambda x: 0 <= x < 1),
        ("mx_source", str, ["full_data", "pilot_subsample"]),
    ],
}


def find_config_file(explicit_path: str | None) -> Path | None:
    """
    Find the configuration file following the lookup order.

    Parameters
    ----------
    explicit_path : str or None
        Path given with --config.

    Returns
    -------
    Path or None
        The file to read, or None when no configuration exists.
    """
    if explicit_path:
        path = Path(explicit_path)
        return path if path.exists() else None

    cwd_config = Path.cwd() / CONFIG_FILENAME
    if cwd_config.exists():
        return cwd_config

    env_var = os.getenv(CONFIG_ENV_VAR)
    if env_var:
        path = Path(env_var)
        return path if path.exists() else None

    return None


def load_config(config_path: str | None = None, required: bool = False) -> dict[str, Any]:
    """
    Load and validate the configuration file.

    Returns an empty dict when no file is found and ``required`` is False.

    Raises
    ------
    ConfigError
        File missing (when required), not valid TOML, or invalid values.
    """
    resolved_path = find_config_file(config_path)
    if resolved_path is None:
        if required or config_path:
            raise ConfigError(
                "configuration file not found. Use 'osmac config generate' to create one, or specify with --config/-c"
            )
        return {}

    try:
        with open(resolved_path, "rb") as f:
            config = tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{resolved_path} is not valid TOML: {exc}") from None

    validate_config(config)
    return config


def validate_config(config: dict[str, Any]) -> None:
    """
    Validate configuration structure and values.

    Raises
    ------
    ConfigError
        Unknown section or key, wrong type, or value out of range.
    """
    for section_name, section_data in config.items():
        if section_name not in VALIDATIONS:
            raise ConfigError(f"unknown section [{section_name}]; expected one of {', '.join(VALIDATIONS)}")
        if not isinstance(section_data, dict):
            raise ConfigError(f"section [{section_name}] must be a table")

        known = {key for key, _, _ in VALIDATIONS[section_name]}
        for key in section_data:
            if key not in known:
                raise ConfigError(f"unknown key {section_name}.{key}")

        for key, expected_type, constraint in VALIDATIONS[section_name]:
            if key not in section_data:
                continue
            value = section_data[key]
            if not isinstance(value, expected_type) or (isinstance(value, bool) and expected_type is not bool):
                raise ConfigError(
                    f"invalid type for {section_name}.{key}: expected {expected_type}, got {type(value).__name__}"
                )
            if constraint is not None:
                if isinstance(constraint, list):
                    if value not in constraint:
                        raise ConfigError(
                            f"invalid value for {section_name}.{key}: {value}. Must be one of: {constraint}"
                        )
                elif callable(constraint):
                    if not constraint(value):
                        raise ConfigError(f"invalid value for {section_name}.{key}: {value}")


def merge_config_with_cli(config: dict[str, Any], section: str, cli_args: dict[str, Any]) -> dict[str, Any]:
    """
    Settings of one section: defaults, then file values, then CLI values that are not None.
    """
    settings = dict(DEFAULTS[section])
    settings.update(config.get(section, {}))
    for key, value in cli_args.items():
        if key in settings and value is not None:
            settings[key] = value
    return settings


def solver_config(config: dict[str, Any], cli_args: dict[str, Any] | None = None) -> SolverConfig:
    settings = merge_config_with_cli(config, "solver", cli_args or {})
    return SolverConfig(
        tol=float(settings["tol"]),
        max_iter=int(settings["max_iter"]),
        divergence_norm=float(settings["divergence_norm"]),
    )


def generate_config_template() -> str:
    """
    Generate the TOML config template with defaults and documentation.

    Returns
    -------
    str
        TOML configuration template
    """
    return """# OSMAC Configuration
# Generated by: osmac config generate

# Newton solver used by every fit
[solver]
# Relative step tolerance ||b(t+1) - b(t)|| / max(1, ||b(t)||)
# Default: 1e-8
# Valid range: > 0
tol = 1e-8

# Iteration cap
# Default: 100
# Valid range: >= 1
max_iter = 100

# ||beta|| above which a fit is declared separated (no finite MLE)
# Default: 1e8
# Valid range: > 0
divergence_norm = 1e8

# Experiment harness defaults (spec files and CLI flags override these)
[bench]
# Worker processes for repetitions
# Default: 1
threads = 1

# Repetitions S
# Default: 100
reps = 100

# Root seed
# Default: 0
seed = 0

# Step-1 (pilot) subsample size
# Default: 200
r0 = 200

# Report format
# Options:
#   - "json": full report
#   - "csv": one row per (method, size)
# Default: "json"
format = "json"

# Subsampling probabilities
[ssp]
# Probability floor mixed into optimal plans: pi <- (1 - floor) * pi + floor / n
# Default: 0.0 (off)
# Valid range: 0 <= floor < 1
floor = 0.0

# M_X estimate used by the mMSE plan
# Options:
#   - "full_data": exact, O(n d^2)
#   - "pilot_subsample": from the step-1 rows only
# Default: "full_data"
mx_source = "full_data"
"""
