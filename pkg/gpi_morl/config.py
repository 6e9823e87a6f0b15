"""
Configuration, constants, and global state for the toolkit.

Two layers live here:

- ``Settings``: process-level knobs (log verbosity, worker pool size) that
  are resolved from CLI flags, environment variables and defaults, in that
  order of priority.
- The pydantic experiment models (``ExperimentConfig`` and its sections)
  that are read from flat ``key = value`` config files.
"""

# system imports
import builtins
import logging
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Literal

# 3rd party imports
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from rich.console import Console
from rich.logging import RichHandler

logger = logging.getLogger("gpi_morl")

ALGORITHMS = ("gpi-ls", "gpi-pd", "gpi-pd-uniform", "oracle")


###############################################################################
###############################################################################
#
class ConfigError(ValueError):
    """A config file could not be read; the message carries file:line."""


# =============================================================================
# Runtime Settings
# =============================================================================


###############################################################################
###############################################################################
#
@dataclass
class Settings:
    """Process-level settings for the command line tool."""

    log_level: str = "INFO"
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)


###############################################################################
###############################################################################
#
@dataclass
class GlobalState:
    """
    A way to hold global state that can be modified from code without
    requiring the use of a `global` statement.
    """

    settings: Settings = field(default_factory=Settings)


# Settings field types for type conversion
SETTING_FIELD_TYPES = {fld.name: fld.type for fld in fields(Settings)}

# Mapping of environment variables to Settings fields
ENV_VAR_TO_SETTING = {
    "MORL_LOG_LEVEL": "log_level",
    "MORL_WORKERS": "workers",
}

# Mapping of CLI arguments to Settings fields
CLI_ARG_TO_SETTING = {
    "--log-level": "log_level",
    "--workers": "workers",
}


###############################################################################
#
def _convert_setting(setting: str, value: Any) -> Any:
    """Convert a raw string (env var or docopt value) to the field's type."""
    match SETTING_FIELD_TYPES[setting]:
        case builtins.int:
            try:
                converted = int(value)
            except (TypeError, ValueError) as exc:
                raise ValueError(
                    f"Setting '{setting}' expects an integer, got {value!r}"
                ) from exc
            if converted < 1:
                raise ValueError(
                    f"Setting '{setting}' must be at least 1, got {converted}"
                )
            return converted
        case _:
            return str(value).upper()


###############################################################################
#
def load_settings(args: dict[str, str | bool | None]) -> Settings:
    """
    Load runtime settings from CLI arguments and environment variables.

    Configuration priority (highest to lowest):
    1. Command-line arguments
    2. Environment variables
    3. Defaults from the Settings dataclass

    Args:
        args: Parsed command-line arguments from docopt

    Returns:
        Configured Settings instance

    Raises:
        ValueError: If a value cannot be converted to the field's type
    """
    settings_map: dict[str, Any] = {}

    for env_var, setting in ENV_VAR_TO_SETTING.items():
        if env_var in os.environ:
            settings_map[setting] = _convert_setting(
                setting, os.environ[env_var]
            )

    # CLI arguments override environment variables
    for cli_arg, setting in CLI_ARG_TO_SETTING.items():
        cli_value = args.get(cli_arg)
        if cli_value is not None:
            settings_map[setting] = _convert_setting(setting, cli_value)

    return Settings(**settings_map)


###############################################################################
#
def configure_logging(level: str = "INFO") -> None:
    """
    Send package logging to stderr through rich.

    Args:
        level: Name of the logging level (DEBUG, INFO, WARNING, ...)
    """
    numeric = logging.getLevelName(level.upper())
    if not isinstance(numeric, int):
        raise ValueError(f"Unknown log level: {level!r}")

    handler = RichHandler(
        console=Console(stderr=True), show_path=False, markup=False
    )
    handler.setFormatter(logging.Formatter("%(message)s"))
    logger.handlers = [handler]
    logger.setLevel(numeric)
    logger.propagate = False


# =============================================================================
# Experiment Models
# =============================================================================


###############################################################################
###############################################################################
#
class GeometryConfig(BaseModel):
    """Tolerances for corner-weight enumeration and dominance pruning."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    feasibility_tolerance: float = Field(default=1e-9, gt=0)
    dedup_tolerance: float = Field(default=1e-9, gt=0)


###############################################################################
###############################################################################
#
class BufferConfig(BaseModel):
    """Replay buffer capacity and the P_w(i) sampling parameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    capacity: int = Field(default=100_000, gt=0)
    alpha_per: float = Field(default=0.6, gt=0, le=1)
    kappa: float = Field(default=0.001, gt=0)
    sampling: Literal["prioritized", "uniform"] = "prioritized"


###############################################################################
###############################################################################
#
class LearnerConfig(BaseModel):
    """Tabular GPI-LS / GPI-PD learner parameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    learning_rate: float = Field(default=0.3, gt=0, le=1)
    epsilon_start: float = Field(default=1.0, ge=0, le=1)
    epsilon_end: float = Field(default=0.0, ge=0, le=1)
    epsilon_anneal_steps: int = Field(default=50_000, ge=0)
    steps_per_iteration: int = Field(default=1000, gt=0)
    dyna_steps: int = Field(default=5, ge=0)
    max_iterations: int = Field(default=100, gt=0)
    epsilon_ccs: float = Field(default=0.0, ge=0)
    done_tolerance: float = Field(default=1e-6, gt=0)
    top_k: int = Field(default=1, gt=0)
    gpi_value_estimator: Literal["exact", "rollout", "learned"] = "exact"
    rollouts: int = Field(default=5, gt=0)
    rollout_horizon: int = Field(default=1000, gt=0)


###############################################################################
###############################################################################
#
class OracleConfig(BaseModel):
    """Value iteration limits and evaluation grid size."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    vi_tolerance: float = Field(default=1e-10, gt=0)
    vi_max_sweeps: int = Field(default=100_000, gt=0)
    weight_grid_size: int = Field(default=101, gt=0)
    max_iterations: int = Field(default=1000, gt=0)


###############################################################################
###############################################################################
#
class EnvironmentConfig(BaseModel):
    """
    Which MOMDP to run on.

    ``name`` is ``dst`` for the shipped Deep Sea Treasure map,
    ``synthetic:<fixture>`` for a named synthetic MOMDP, or a path to a map
    file.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "dst"
    gamma: float = Field(default=0.99, ge=0, lt=1)
    horizon: int | None = Field(default=None, gt=0)


###############################################################################
###############################################################################
#
class ExperimentConfig(BaseModel):
    """A complete batch experiment: environment, algorithm, seeds."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    env: EnvironmentConfig = Field(default_factory=EnvironmentConfig)
    algorithm: Literal["gpi-ls", "gpi-pd", "gpi-pd-uniform", "oracle"] = (
        "gpi-pd"
    )
    learner: LearnerConfig = Field(default_factory=LearnerConfig)
    buffer: BufferConfig = Field(default_factory=BufferConfig)
    geometry: GeometryConfig = Field(default_factory=GeometryConfig)
    oracle: OracleConfig = Field(default_factory=OracleConfig)
    seeds: list[int] = Field(default_factory=lambda: [0], min_length=1)
    output_dir: Path = Path("results")

    ###########################################################################
    #
    @field_validator("seeds", mode="before")
    @classmethod
    def _split_seed_list(cls, value: Any) -> Any:
        """Accept ``"1,2,3"`` as well as a list of integers."""
        if isinstance(value, str):
            return parse_seed_list(value)
        if isinstance(value, int):
            return [value]
        return value


###############################################################################
#
def parse_seed_list(raw: str) -> list[int]:
    """
    Parse a comma separated list of seeds.

    Args:
        raw: Text such as ``"1,2,3"``; ranges like ``"1-10"`` are expanded

    Returns:
        The seeds in the order given, duplicates removed

    Raises:
        ValueError: If an element is not an integer or the list is empty
    """
    seeds: list[int] = []
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            low, high = part.split("-", 1) if part[0] != "-" else (part, "")
            if not high:
                raise ValueError(f"Invalid seed range: {part!r}")
            seeds.extend(range(int(low), int(high) + 1))
        else:
            seeds.append(int(part))
    seeds = list(dict.fromkeys(seeds))
    if not seeds:
        raise ValueError("No seeds given")
    return seeds


# =============================================================================
# Config Files
# =============================================================================


###############################################################################
#
def parse_config_text(
    text: str, source: str = "<config>"
) -> tuple[dict[str, Any], dict[str, int]]:
    """
    Parse flat ``key = value`` config text into a nested dictionary.

    Args:
        text: The config file contents
        source: Name used in error messages

    Returns:
        Tuple of (nested values, dotted key -> line number)

    Raises:
        ConfigError: On malformed lines, duplicate or conflicting keys

    Note:
        ``#`` starts a comment anywhere on a line. Dotted keys such as
        ``learner.learning_rate`` become nested sections. Values stay
        strings; the pydantic models convert them.
    """
    values: dict[str, Any] = {}
    key_lines: dict[str, int] = {}

    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")

        key, value = (part.strip() for part in line.split("=", 1))
        if not key or any(not piece for piece in key.split(".")):
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in key_lines:
            raise ConfigError(
                f"{source}:{lineno}: duplicate key '{key}' "
                f"(first set on line {key_lines[key]})"
            )

        *sections, leaf = key.split(".")
        node = values
        for section in sections:
            child = node.setdefault(section, {})
            if not isinstance(child, dict):
                raise ConfigError(
                    f"{source}:{lineno}: '{section}' is a value, not a section"
                )
            node = child
        if isinstance(node.get(leaf), dict):
            raise ConfigError(
                f"{source}:{lineno}: '{key}' is a section, not a value"
            )
        node[leaf] = value
        key_lines[key] = lineno

    return values, key_lines


###############################################################################
#
def _line_for_error(loc: tuple[Any, ...], key_lines: dict[str, int]) -> int:
    """Find the config line that produced a pydantic error location."""
    parts = [str(piece) for piece in loc]
    while parts:
        line = key_lines.get(".".join(parts))
        if line is not None:
            return line
        parts.pop()
    return 0


###############################################################################
#
def load_experiment_config(
    path: Path, overrides: dict[str, Any] | None = None
) -> ExperimentConfig:
    """
    Read and validate an experiment config file.

    Args:
        path: The config file
        overrides: Top-level values that replace what the file says
            (``seeds``, ``output_dir``), typically from the command line

    Returns:
        The validated ExperimentConfig

    Raises:
        ConfigError: If the file cannot be read or does not validate
    """
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}:0: cannot read config file: {exc}") from exc

    values, key_lines = parse_config_text(text, str(path))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
            key_lines.pop(key, None)

    try:
        config = ExperimentConfig.model_validate(values)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = tuple(first["loc"])
        line = _line_for_error(loc, key_lines)
        where = ".".join(str(piece) for piece in loc)
        raise ConfigError(f"{path}:{line}: {where}: {first['msg']}") from exc

    logger.debug("Loaded experiment config from %s", path)
    return config


# Global state - settings will be updated by the CLI after parsing args
global_state = GlobalState()
