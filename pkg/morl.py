#!/usr/bin/env python3
"""Tabular multi-objective RL experiments: GPI-LS, GPI-PD and exact CCS oracles

Usage:
  morl.py run --config=<file> [--seeds=<list>] [--out=<dir>] [--workers=<n>] [--log-level=<level>]
  morl.py oracle --env=<map> [--out=<dir>] [--log-level=<level>]
  morl.py compare <baseline> <candidate> [--threshold=<t>] [--relative=<f>] [--metric=<name>]
  morl.py weights [--m=<m>] [--n=<n>]
  morl.py (-h | --help)
  morl.py --version

Options:
  --config=<file>       Experiment config file (see resources/guides/config-format.md)
  --seeds=<list>        Comma separated seeds, overrides the config (e.g. 1,2,3 or 1-10)
  --out=<dir>           Output directory, overrides the config [oracle default: results]
  --workers=<n>         Worker processes for seeds (default: number of CPUs)
  --log-level=<level>   DEBUG, INFO, WARNING or ERROR (default: INFO)
  --env=<map>           dst, synthetic:<name>, or a map file path
  --threshold=<t>       Absolute threshold for steps-to-threshold
  --relative=<f>        Threshold as a fraction of each seed's first value [default: 0.1]
  --metric=<name>       mul_corner, mul_grid or mul_gpi [default: mul_corner]
  --m=<m>               Number of objectives [default: 2]
  --n=<n>               Requested number of weights [default: 101]
  -h --help             Show this help
  --version             Show version

Configuration Priority:
  1. Command-line arguments (highest)
  2. Environment variables (MORL_LOG_LEVEL, MORL_WORKERS)
  3. Defaults (lowest)

Exit codes: 0 success, 1 usage or input error, 2 runtime error.
"""

# system imports
import sys
from pathlib import Path

# 3rd party imports
from docopt import DocoptExit, docopt
from rich.console import Console
from rich.table import Table

# project imports
from gpi_morl.config import (
    ConfigError,
    EnvironmentConfig,
    ExperimentConfig,
    configure_logging,
    global_state,
    load_experiment_config,
    load_settings,
    logger,
)
from gpi_morl.environments import MapFormatError
from gpi_morl.geometry import equidistant_weights
from gpi_morl.harness import ComparisonSummary, compare_runs, run_experiment
from gpi_morl.utils import format_number

__version__ = "0.1.0"

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

console = Console()
error_console = Console(stderr=True)


###############################################################################
#
def _report_outputs(output_dir: Path) -> None:
    for path in sorted(output_dir.glob("*.csv")):
        console.print(f"wrote {path}", highlight=False, soft_wrap=True)


###############################################################################
#
def _run(args: dict, config: ExperimentConfig, base_dir: Path) -> int:
    try:
        run_experiment(config, base_dir, workers=global_state.settings.workers)
    except MapFormatError as exc:
        error_console.print(f"error: {exc}")
        return EXIT_USAGE
    except Exception as exc:
        logger.exception("Run failed")
        error_console.print(f"error: {exc}")
        return EXIT_RUNTIME
    _report_outputs(config.output_dir)
    return EXIT_OK


###############################################################################
#
def cmd_run(args: dict) -> int:
    config_path = Path(args["--config"])
    overrides = {"seeds": args["--seeds"], "output_dir": args["--out"]}
    try:
        config = load_experiment_config(config_path, overrides)
    except ConfigError as exc:
        error_console.print(f"error: {exc}")
        return EXIT_USAGE
    return _run(args, config, config_path.parent)


###############################################################################
#
def cmd_oracle(args: dict) -> int:
    config = ExperimentConfig(
        env=EnvironmentConfig(name=args["--env"]),
        algorithm="oracle",
        output_dir=Path(args["--out"] or "results"),
    )
    return _run(args, config, Path.cwd())


###############################################################################
#
def render_comparison(summary: ComparisonSummary) -> None:
    """Print per-seed steps-to-threshold and per-step deltas as rich tables."""
    seeds = Table(title=f"Steps to threshold ({summary.metric})")
    seeds.add_column("seed", justify="right")
    seeds.add_column("baseline", justify="right")
    seeds.add_column("candidate", justify="right")
    for seed in sorted(set(summary.baseline_steps) | set(summary.candidate_steps)):
        cells = []
        for steps in (summary.baseline_steps, summary.candidate_steps):
            value = steps.get(seed)
            cells.append("not reached" if value is None else str(value))
        seeds.add_row(str(seed), *cells)

    def median(value: float | None) -> str:
        return "not reached" if value is None else format_number(value)

    seeds.add_row(
        "median", median(summary.baseline_median), median(summary.candidate_median)
    )
    console.print(seeds)
    ratio = "n/a" if summary.ratio is None else f"{summary.ratio:.4f}"
    console.print(f"median ratio (candidate / baseline): {ratio}")

    deltas = Table(title=f"Per-step {summary.metric} means")
    for name in ("env_steps", "baseline", "candidate", "delta"):
        deltas.add_column(name, justify="right")
    for steps, base, cand, delta in summary.rows:
        deltas.add_row(
            str(steps), format_number(base), format_number(cand), format_number(delta)
        )
    console.print(deltas)


###############################################################################
#
def cmd_compare(args: dict) -> int:
    try:
        threshold = None if args["--threshold"] is None else float(args["--threshold"])
        relative = float(args["--relative"])
    except ValueError as exc:
        error_console.print(f"error: {exc}")
        return EXIT_USAGE
    try:
        summary = compare_runs(
            Path(args["<baseline>"]),
            Path(args["<candidate>"]),
            threshold=threshold,
            relative=relative,
            metric=args["--metric"],
        )
    except FileNotFoundError as exc:
        error_console.print(f"error: {exc}")
        return EXIT_USAGE
    except ValueError as exc:
        error_console.print(f"error: {exc}")
        return EXIT_RUNTIME
    render_comparison(summary)
    return EXIT_OK


###############################################################################
#
def cmd_weights(args: dict) -> int:
    try:
        weights = equidistant_weights(int(args["--n"]), int(args["--m"]))
    except ValueError as exc:
        error_console.print(f"error: {exc}")
        return EXIT_USAGE
    for w in weights:
        console.print(",".join(format_number(x) for x in w), highlight=False)
    return EXIT_OK


###############################################################################
#
def main(argv: list[str] | None = None) -> int:
    """Parse arguments, configure settings and logging, dispatch the command."""
    try:
        args = docopt(__doc__, argv=argv, version=__version__)
    except DocoptExit as exc:
        error_console.print(str(exc), highlight=False)
        return EXIT_USAGE
    except SystemExit as exc:
        # --help and --version print and exit cleanly
        return EXIT_OK if exc.code is None else EXIT_USAGE

    try:
        global_state.settings = load_settings(args)
        configure_logging(global_state.settings.log_level)
    except ValueError as exc:
        error_console.print(f"error: {exc}")
        return EXIT_USAGE

    if args["run"]:
        return cmd_run(args)
    if args["oracle"]:
        return cmd_oracle(args)
    if args["compare"]:
        return cmd_compare(args)
    return cmd_weights(args)


###############################################################################
###############################################################################
#
if __name__ == "__main__":
    sys.exit(main())
