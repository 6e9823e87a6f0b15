"""
Batch experiments: resolve the environment, run every seed (optionally in a
process pool), and write metric traces, aggregates and CCS dumps as CSV.
Also compares two result directories.
"""

# system imports
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

# 3rd party imports
import numpy as np
from scipy import stats

# project imports
from gpi_morl.config import ExperimentConfig, logger
from gpi_morl.environments import (
    build_dst,
    build_synthetic,
    default_dst_map,
    load_dst_map,
    synthetic_fixture,
)
from gpi_morl.geometry import equidistant_weights, remove_dominated
from gpi_morl.learners import exact_library_values, gpi_pd_run
from gpi_morl.linear_support import GpiLsState, run_gpi_ls
from gpi_morl.metrics import TRACE_COLUMNS, MetricTrace
from gpi_morl.momdp import Momdp, make_rng
from gpi_morl.oracle import (
    PerturbedOracleSolver,
    exact_ccs,
    exact_ccs_state,
    sort_values,
)
from gpi_morl.utils import config_hash, csv_text, read_csv, write_file

AGGREGATE_COLUMNS = (
    "iteration",
    "env_steps",
    "eu_mean",
    "eu_ci95",
    "mul_mean",
    "mul_ci95",
    "mul_corner_mean",
    "mul_corner_ci95",
    "eu_gpi_mean",
    "eu_gpi_ci95",
    "mul_gpi_mean",
    "mul_gpi_ci95",
    "runs",
)
RUNS_COLUMNS = (
    "seed",
    "config_hash",
    "iterations",
    "env_steps",
    "final_mul_corner",
    "duration_s",
)

# Trace column -> aggregate column holding its mean
METRIC_MEAN_COLUMNS = {
    "eu_grid": "eu_mean",
    "mul_grid": "mul_mean",
    "mul_corner": "mul_corner_mean",
    "eu_gpi": "eu_gpi_mean",
    "mul_gpi": "mul_gpi_mean",
}
THRESHOLD_METRICS = ("mul_corner", "mul_grid", "mul_gpi")


###############################################################################
###############################################################################
#
@dataclass
class RunRecord:
    """The outcome of one seeded run."""

    config_hash: str
    seed: int
    trace: MetricTrace
    values: np.ndarray  # final value set, shape (k, m)
    duration_s: float
    iterations: int
    env_steps: int


# =============================================================================
# Environment Resolution
# =============================================================================


###############################################################################
#
def resolve_environment(cfg: ExperimentConfig, base_dir: Path = Path(".")) -> Momdp:
    """
    Build the MOMDP an experiment names.

    Args:
        cfg: The experiment config
        base_dir: Directory relative map paths are resolved against

    Returns:
        The MOMDP

    Raises:
        MapFormatError: If a map file is unreadable or malformed
        ValueError: If a synthetic fixture name is unknown
    """
    env_cfg = cfg.env
    explicit = env_cfg.model_fields_set
    if env_cfg.name == "dst":
        return build_dst(default_dst_map(), env_cfg.gamma, env_cfg.horizon)

    if env_cfg.name.startswith("synthetic:"):
        spec = synthetic_fixture(env_cfg.name.removeprefix("synthetic:"))
        env = build_synthetic(spec)
        # Fixtures carry their own discount unless the config sets one
        if "gamma" in explicit or "horizon" in explicit:
            env = Momdp(
                probs=env.probs,
                next_states=env.next_states,
                rewards=env.rewards,
                terminals=env.terminals,
                initial=env.initial,
                gamma=env_cfg.gamma if "gamma" in explicit else env.gamma,
                horizon=env_cfg.horizon if "horizon" in explicit else env.horizon,
                name=env.name,
            )
        return env

    path = Path(env_cfg.name).expanduser()
    if not path.is_absolute():
        path = base_dir / path
    return build_dst(load_dst_map(path), env_cfg.gamma, env_cfg.horizon)


###############################################################################
#
def evaluation_grid(cfg: ExperimentConfig, m: int) -> np.ndarray:
    """The equidistant weight grid used for EU and grid MUL."""
    return equidistant_weights(max(cfg.oracle.weight_grid_size, m), m)


# =============================================================================
# Running
# =============================================================================


###############################################################################
#
def _oracle_state(
    cfg: ExperimentConfig,
    seed: int,
    env: Momdp,
    reference: np.ndarray,
    grid: np.ndarray,
) -> GpiLsState:
    """GPI-LS with the exact oracle, or the epsilon-suboptimal one when epsilon_ccs > 0."""
    epsilon = cfg.learner.epsilon_ccs
    if epsilon == 0.0:
        return exact_ccs_state(
            env, cfg.geometry, cfg.oracle, reference=reference, grid=grid
        )
    return run_gpi_ls(
        env,
        PerturbedOracleSolver(env, epsilon, cfg.oracle, seed=seed),
        cfg.geometry,
        max_iterations=cfg.oracle.max_iterations,
        reference=reference,
        grid=grid,
    )


###############################################################################
#
def run_single(
    cfg: ExperimentConfig,
    seed: int,
    env: Momdp,
    reference: np.ndarray,
    grid: np.ndarray,
) -> RunRecord:
    """
    Execute one seed of an experiment.

    Args:
        cfg: The experiment config
        seed: Run seed (the only source of randomness)
        env: The resolved MOMDP
        reference: Oracle CCS of env
        grid: Evaluation weight grid

    Returns:
        The RunRecord
    """
    started = time.perf_counter()
    learner_cfg = cfg.learner
    buffer_cfg = cfg.buffer
    match cfg.algorithm:
        case "oracle":
            state = _oracle_state(cfg, seed, env, reference, grid)
            values = remove_dominated(state.library.values, cfg.geometry)
            state.env_steps = state.iteration
        case _:
            if cfg.algorithm == "gpi-ls":
                learner_cfg = learner_cfg.model_copy(update={"dyna_steps": 0})
            elif cfg.algorithm == "gpi-pd-uniform":
                buffer_cfg = buffer_cfg.model_copy(update={"sampling": "uniform"})
            state = gpi_pd_run(
                env,
                learner_cfg,
                buffer_cfg,
                cfg.geometry,
                make_rng(seed),
                reference=reference,
                grid=grid,
            )
            values = exact_library_values(env, state.library)

    duration = time.perf_counter() - started
    logger.info(
        "Seed %d: %d iterations, %d env steps, %d policies in %.2fs",
        seed,
        state.iteration,
        state.env_steps,
        len(values),
        duration,
    )
    if state.trace.records:
        final = state.trace.records[-1].mul_corner
        if final <= cfg.learner.epsilon_ccs + 1e-9:
            logger.info("Seed %d reached an epsilon-CCS (MUL %.3g)", seed, final)
        else:
            logger.info(
                "Seed %d: MUL %.3g above epsilon_ccs %.3g",
                seed,
                final,
                cfg.learner.epsilon_ccs,
            )
    return RunRecord(
        config_hash=config_hash(cfg),
        seed=seed,
        trace=state.trace,
        values=sort_values(values),
        duration_s=duration,
        iterations=state.iteration,
        env_steps=state.env_steps,
    )


###############################################################################
#
def run_experiment(
    cfg: ExperimentConfig, base_dir: Path = Path("."), workers: int = 1
) -> list[RunRecord]:
    """
    Run every seed and write the result files.

    Args:
        cfg: The experiment config
        base_dir: Directory relative paths in the config are resolved against
        workers: Process pool size; 1 runs inline

    Returns:
        One RunRecord per seed, in seed order
    """
    env = resolve_environment(cfg, base_dir)
    reference = exact_ccs(env, cfg.geometry, cfg.oracle)
    grid = evaluation_grid(cfg, env.objective_count)
    logger.info(
        "Running %s on %s with %d seed(s), reference CCS of %d vectors",
        cfg.algorithm,
        env.name,
        len(cfg.seeds),
        len(reference),
    )

    if workers <= 1 or len(cfg.seeds) == 1:
        records = [run_single(cfg, seed, env, reference, grid) for seed in cfg.seeds]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(cfg.seeds))) as pool:
            futures = [
                pool.submit(run_single, cfg, seed, env, reference, grid)
                for seed in cfg.seeds
            ]
            records = [future.result() for future in futures]

    write_results(cfg, records, reference)
    return records


# =============================================================================
# Result Files
# =============================================================================


###############################################################################
#
def trace_csv(trace: MetricTrace) -> str:
    return csv_text(TRACE_COLUMNS, (record.as_row() for record in trace))


###############################################################################
#
def values_csv(values: np.ndarray) -> str:
    header = [f"v{i}" for i in range(values.shape[1])]
    return csv_text(header, (tuple(row) for row in values))


###############################################################################
#
def ci95(samples: list[float]) -> float:
    """Student-t 95% confidence half-width; 0 for fewer than two samples."""
    if len(samples) < 2:
        return 0.0
    spread = float(stats.sem(samples))
    if spread == 0.0:
        return 0.0
    return float(stats.t.ppf(0.975, len(samples) - 1) * spread)


###############################################################################
#
def aggregate_grid(cfg: ExperimentConfig, records: list[RunRecord]) -> list[int]:
    """env_steps at which traces are aggregated."""
    if cfg.algorithm == "oracle":
        return sorted({r.env_steps for record in records for r in record.trace})
    n = cfg.learner.steps_per_iteration
    return [k * n for k in range(1, cfg.learner.max_iterations + 1)]


###############################################################################
#
def aggregate_rows(
    cfg: ExperimentConfig, records: list[RunRecord]
) -> list[tuple[int | float, ...]]:
    """
    Per-step mean and 95% CI of the metrics across seeds.

    Seeds that stopped early carry their last record forward; before its
    first record a seed contributes its first record.
    """
    grid = aggregate_grid(cfg, records)
    rows: list[tuple[int | float, ...]] = []
    for k, steps in enumerate(grid, start=1):
        picked = []
        for record in records:
            if not record.trace.records:
                continue
            eligible = [r for r in record.trace if r.env_steps <= steps]
            picked.append(eligible[-1] if eligible else record.trace.records[0])
        if not picked:
            continue
        eu = [r.eu_grid for r in picked]
        mul = [r.mul_grid for r in picked]
        corner = [r.mul_corner for r in picked]
        eu_gpi = [r.eu_gpi for r in picked]
        mul_gpi = [r.mul_gpi for r in picked]
        iteration = picked[0].iteration if cfg.algorithm == "oracle" else k
        rows.append(
            (
                iteration,
                steps,
                float(np.mean(eu)),
                ci95(eu),
                float(np.mean(mul)),
                ci95(mul),
                float(np.mean(corner)),
                ci95(corner),
                float(np.mean(eu_gpi)),
                ci95(eu_gpi),
                float(np.mean(mul_gpi)),
                ci95(mul_gpi),
                len(picked),
            )
        )
    return rows


###############################################################################
#
def write_results(
    cfg: ExperimentConfig, records: list[RunRecord], reference: np.ndarray
) -> None:
    """Write trace, value, run summary, aggregate and (oracle) CCS files."""
    out = cfg.output_dir
    for record in records:
        write_file(out / f"trace-seed-{record.seed}.csv", trace_csv(record.trace))
        write_file(out / f"values-seed-{record.seed}.csv", values_csv(record.values))

    run_rows = [
        (
            record.seed,
            record.config_hash,
            record.iterations,
            record.env_steps,
            record.trace.records[-1].mul_corner if record.trace.records else None,
            round(record.duration_s, 3),
        )
        for record in records
    ]
    write_file(out / "runs.csv", csv_text(RUNS_COLUMNS, run_rows))
    write_file(out / "aggregate.csv", csv_text(AGGREGATE_COLUMNS, aggregate_rows(cfg, records)))
    if cfg.algorithm == "oracle":
        write_file(out / "ccs.csv", values_csv(reference))


# =============================================================================
# Comparison
# =============================================================================


###############################################################################
###############################################################################
#
@dataclass
class ComparisonSummary:
    """Per-step deltas and steps-to-threshold statistics of two result dirs."""

    metric: str
    rows: list[tuple[int, float, float, float]]  # env_steps, baseline, candidate, delta
    baseline_steps: dict[int, int | None] = field(default_factory=dict)
    candidate_steps: dict[int, int | None] = field(default_factory=dict)
    baseline_median: float | None = None
    candidate_median: float | None = None
    ratio: float | None = None


###############################################################################
#
def steps_to_threshold(
    rows: list[dict[str, str]],
    metric: str,
    threshold: float | None,
    relative: float,
) -> int | None:
    """
    First env_steps at which a trace's metric is at or below the threshold.

    Args:
        rows: Trace CSV rows
        metric: Trace column
        threshold: Absolute threshold; when None, relative * first value
        relative: Fraction of the trace's first value

    Returns:
        The step, or None when the threshold is never reached
    """
    if not rows:
        return None
    limit = threshold if threshold is not None else relative * float(rows[0][metric])
    for row in rows:
        if float(row[metric]) <= limit:
            return int(row["env_steps"])
    return None


###############################################################################
#
def _seed_traces(directory: Path) -> dict[int, list[dict[str, str]]]:
    traces = {}
    for path in directory.glob("trace-seed-*.csv"):
        seed = int(path.stem.removeprefix("trace-seed-"))
        traces[seed] = read_csv(path)
    return dict(sorted(traces.items()))


###############################################################################
#
def _median(steps: dict[int, int | None]) -> float | None:
    reached = [s for s in steps.values() if s is not None]
    return float(statistics.median(reached)) if reached else None


###############################################################################
#
def compare_runs(
    baseline: Path,
    candidate: Path,
    threshold: float | None = None,
    relative: float = 0.1,
    metric: str = "mul_corner",
) -> ComparisonSummary:
    """
    Compare two result directories.

    Args:
        baseline: Directory of the baseline run
        candidate: Directory of the candidate run
        threshold: Absolute metric threshold for steps-to-threshold
        relative: Threshold as a fraction of each seed's first value, used
            when no absolute threshold is given
        metric: ``mul_corner``, ``mul_grid`` or ``mul_gpi``

    Returns:
        The ComparisonSummary; seeds that never reach the threshold map to
        None and are left out of the medians

    Raises:
        FileNotFoundError: If an aggregate file is missing
        ValueError: If the aggregate grids differ or the metric is unknown
    """
    if metric not in THRESHOLD_METRICS:
        raise ValueError(f"Metric must be one of {THRESHOLD_METRICS}, got {metric!r}")
    base_rows = read_csv(baseline / "aggregate.csv")
    cand_rows = read_csv(candidate / "aggregate.csv")
    base_grid = [int(row["env_steps"]) for row in base_rows]
    cand_grid = [int(row["env_steps"]) for row in cand_rows]
    if base_grid != cand_grid:
        raise ValueError(
            f"Mismatched iteration grids: {baseline} has {len(base_grid)} rows, "
            f"{candidate} has {len(cand_grid)} rows or different env_steps"
        )

    column = METRIC_MEAN_COLUMNS[metric]
    rows = []
    for steps, base, cand in zip(base_grid, base_rows, cand_rows, strict=True):
        b, c = float(base[column]), float(cand[column])
        rows.append((steps, b, c, c - b))

    summary = ComparisonSummary(metric=metric, rows=rows)
    summary.baseline_steps = {
        seed: steps_to_threshold(trace, metric, threshold, relative)
        for seed, trace in _seed_traces(baseline).items()
    }
    summary.candidate_steps = {
        seed: steps_to_threshold(trace, metric, threshold, relative)
        for seed, trace in _seed_traces(candidate).items()
    }
    summary.baseline_median = _median(summary.baseline_steps)
    summary.candidate_median = _median(summary.candidate_steps)
    if summary.baseline_median and summary.candidate_median is not None:
        summary.ratio = summary.candidate_median / summary.baseline_median
    return summary
