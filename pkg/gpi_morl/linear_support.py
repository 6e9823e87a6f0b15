"""
GPI Linear Support: the corner-weight outer loop that decides which
preference to train the next policy for.

The loop keeps a library of policies, computes the corner weights of their
value vectors, and picks the corner where the GPI policy promises the largest
improvement over the best library policy. Corner weights whose policy was
completed are remembered in the weight support and never selected again.
"""

# system imports
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Literal, NamedTuple, Protocol

# 3rd party imports
import numpy as np

# project imports
from gpi_morl.config import GeometryConfig, logger
from gpi_morl.dynamic_programming import ConvergenceError, evaluate_policy
from gpi_morl.geometry import corner_weights, max_scalarized, nondominated_indices
from gpi_morl.gpi import PolicyLibrary, gpi_policy
from gpi_morl.metrics import MetricTrace, measure
from gpi_morl.momdp import Momdp, extremum_weight, rollout

GpiValueFn = Callable[[np.ndarray], float]


###############################################################################
###############################################################################
#
class PolicyProposal(NamedTuple):
    """What a NewPolicy solver returns for one weight."""

    q_table: np.ndarray  # shape (S, A, m)
    value: np.ndarray  # shape (m,)
    done: bool  # the policy will not improve further for this weight


###############################################################################
###############################################################################
#
class NewPolicySolver(Protocol):
    """Learns or computes a policy for a weight, given the current library."""

    def __call__(self, w: np.ndarray, library: PolicyLibrary) -> PolicyProposal: ...


###############################################################################
###############################################################################
#
@dataclass
class GpiLsState:
    """Library, finished weights, iteration counter and metric trace."""

    library: PolicyLibrary
    finished_weights: list[np.ndarray] = field(default_factory=list)
    iteration: int = 0
    trace: MetricTrace = field(default_factory=MetricTrace)
    env_steps: int = 0

    ###########################################################################
    #
    def is_finished(self, w: np.ndarray, tolerance: float = 1e-9) -> bool:
        return any(
            np.max(np.abs(w - done)) <= tolerance for done in self.finished_weights
        )

    ###########################################################################
    #
    def mark_finished(self, w: np.ndarray, tolerance: float = 1e-9) -> None:
        if not self.is_finished(w, tolerance):
            self.finished_weights.append(np.array(w, dtype=float))


###############################################################################
#
def evaluate_gpi_value(
    env: Momdp,
    lib: PolicyLibrary,
    w: np.ndarray,
    method: Literal["exact", "rollout"] = "exact",
    rng: np.random.Generator | None = None,
    rollouts: int = 5,
    horizon: int = 1000,
) -> float:
    """
    Scalarized value v^GPI_w of the GPI policy under mu.

    Args:
        env: The MOMDP
        lib: Policy library (non-empty)
        w: Weight vector
        method: "exact" dynamic programming or "rollout" Monte Carlo
        rng: Random stream, required for rollouts
        rollouts: Number of rollouts K
        horizon: Step cap per rollout

    Returns:
        The scalar GPI value

    Raises:
        ConvergenceError: If exact evaluation fails
        ValueError: If rollouts are requested without a random stream
    """
    policy = gpi_policy(lib, w)
    if method == "exact":
        return float(evaluate_policy(env, policy) @ w)
    if rng is None:
        raise ValueError("Rollout evaluation needs a random stream")
    returns = [
        rollout(env, lambda s: int(policy[s]), rng, horizon) @ w
        for _ in range(rollouts)
    ]
    return float(np.mean(returns))


###############################################################################
#
def gpi_values_on_grid(env: Momdp, lib: PolicyLibrary, grid: np.ndarray) -> np.ndarray:
    """Exact v^GPI_w for every row of an evaluation grid."""
    return np.array([evaluate_gpi_value(env, lib, w) for w in grid])


###############################################################################
#
def select_weights(
    state: GpiLsState,
    geometry_cfg: GeometryConfig | None,
    gpi_value_fn: GpiValueFn,
    k: int = 1,
) -> list[np.ndarray]:
    """
    The k unfinished corner weights with the largest GPI improvement.

    Args:
        state: Current loop state; the library must hold evaluated values
        geometry_cfg: Tolerances
        gpi_value_fn: Maps a weight to v^GPI_w
        k: How many weights to return

    Returns:
        Up to k weights ordered by decreasing improvement, ties broken by
        lexicographic order. Empty when every corner weight is finished.
    """
    cfg = geometry_cfg or GeometryConfig()
    values = state.library.values
    candidates = [
        w
        for w in corner_weights(values, cfg)
        if not state.is_finished(w, cfg.dedup_tolerance)
    ]
    if not candidates:
        return []

    improvements = np.array(
        [gpi_value_fn(w) - max_scalarized(values, w)[0] for w in candidates]
    )
    for w, gain in zip(candidates, improvements, strict=True):
        logger.debug("Corner %s: GPI improvement %.6g", np.round(w, 6), gain)
    order = np.argsort(-improvements, kind="stable")
    return [candidates[i] for i in order[:k]]


###############################################################################
#
def select_weight(
    state: GpiLsState,
    geometry_cfg: GeometryConfig | None,
    gpi_value_fn: GpiValueFn,
) -> np.ndarray | None:
    """The corner weight with maximal GPI improvement, or None when done."""
    chosen = select_weights(state, geometry_cfg, gpi_value_fn, k=1)
    return chosen[0] if chosen else None


###############################################################################
#
def prune_library(state: GpiLsState, geometry_cfg: GeometryConfig | None) -> None:
    """Drop the policies whose value vectors are linearly dominated."""
    if len(state.library) > 1:
        state.library.keep(nondominated_indices(state.library.values, geometry_cfg))


###############################################################################
#
def run_gpi_ls(
    env: Momdp,
    solver: NewPolicySolver,
    geometry_cfg: GeometryConfig | None = None,
    max_iterations: int = 1000,
    reference: np.ndarray | None = None,
    grid: np.ndarray | None = None,
    gpi_value_fn: GpiValueFn | None = None,
) -> GpiLsState:
    """
    The GPI-LS outer loop with a pluggable NewPolicy solver.

    Args:
        env: The MOMDP
        solver: Produces a policy for a selected weight
        geometry_cfg: Tolerances
        max_iterations: Cap on weight selections
        reference: Reference CCS; when given with grid, metrics are traced
        grid: Evaluation weight grid
        gpi_value_fn: Estimator of v^GPI_w; exact DP on env by default

    Returns:
        The final state; the library holds the (epsilon-)CCS

    Raises:
        ConvergenceError: If corner weights remain after max_iterations
    """
    cfg = geometry_cfg or GeometryConfig()
    state = GpiLsState(library=PolicyLibrary.for_env(env))
    value_fn: GpiValueFn = gpi_value_fn or (
        lambda w: evaluate_gpi_value(env, state.library, w)
    )

    def record() -> None:
        if reference is not None and grid is not None:
            state.trace.append(
                measure(
                    state.library.values,
                    reference,
                    grid,
                    iteration=state.iteration,
                    env_steps=state.iteration,
                    cfg=cfg,
                    gpi_values=gpi_values_on_grid(env, state.library, grid),
                )
            )

    first = extremum_weight(env.objective_count, 0)
    proposal = solver(first, state.library)
    state.library.add(proposal.q_table, first, proposal.value)
    record()

    while state.iteration < max_iterations:
        w = select_weight(state, cfg, value_fn)
        if w is None:
            logger.info(
                "GPI-LS finished after %d iterations with %d policies",
                state.iteration,
                len(state.library),
            )
            return state

        state.iteration += 1
        proposal = solver(w, state.library)
        if proposal.done:
            state.mark_finished(w, cfg.dedup_tolerance)
        state.library.add(proposal.q_table, w, proposal.value)
        prune_library(state, cfg)
        logger.debug(
            "Iteration %d: w=%s value=%s library=%d",
            state.iteration,
            np.round(w, 6),
            np.round(proposal.value, 6),
            len(state.library),
        )
        record()

    raise ConvergenceError(
        f"GPI-LS still had corner weights after {max_iterations} iterations"
    )
