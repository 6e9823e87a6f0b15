"""
Tabular learners: multi-objective Q-learning updates, the learned tabular
model, epsilon-greedy GPI exploration, and GPI Prioritized Dyna (GPI-PD).

GPI-PD interleaves three loops:

- every N environment steps the library values are re-estimated, finished
  policies are detected, dominated policies are pruned and GPI-LS picks the
  next corner weight;
- every environment step follows the epsilon-greedy GPI policy and updates
  every policy in the library with its own weight's GPI bootstrap action;
- after each real step, H Dyna updates replay buffered (s, a) pairs sampled
  by GPI priority and simulate them with the learned model.
"""

# system imports
from collections.abc import Callable
from dataclasses import dataclass, field

# 3rd party imports
import numpy as np

# project imports
from gpi_morl.config import (
    BufferConfig,
    GeometryConfig,
    LearnerConfig,
    logger,
)
from gpi_morl.dynamic_programming import evaluate_policy
from gpi_morl.gpi import (
    PolicyLibrary,
    batch_priorities,
    gpi_action,
    greedy_policy,
    priority,
)
from gpi_morl.linear_support import (
    GpiLsState,
    evaluate_gpi_value,
    gpi_values_on_grid,
    prune_library,
    select_weights,
)
from gpi_morl.metrics import measure
from gpi_morl.momdp import Momdp, Transition, extremum_weight, reset, split_rng, step
from gpi_morl.replay import PrioritizedBuffer

# =============================================================================
# Updates and Exploration
# =============================================================================


###############################################################################
#
def td_update(
    q_table: np.ndarray,
    t: Transition,
    a_next: int,
    learning_rate: float,
    gamma: float,
) -> np.ndarray:
    """
    Vector Q-learning step, in place:
    q(s, a) += lr * (R + gamma * q(s', a') - q(s, a)), no bootstrap past a terminal.

    Returns:
        The same table, for chaining
    """
    bootstrap = 0.0 if t.terminal else gamma * q_table[t.next_state, a_next]
    q_table[t.state, t.action] += learning_rate * (
        t.reward + bootstrap - q_table[t.state, t.action]
    )
    return q_table


###############################################################################
#
def gpi_bootstrap_actions(lib: PolicyLibrary, next_state: int) -> np.ndarray:
    """For every policy's weight w_j, the GPI action at next_state under w_j."""
    # scores[i, a, j] = q_i(s', a) . w_j
    scores = lib.q[:, next_state] @ lib.weights.T
    return np.argmax(scores.max(axis=0), axis=0)


###############################################################################
#
def update_library(lib: PolicyLibrary, t: Transition, learning_rate: float) -> None:
    """
    TD-update every policy in the library on one transition.

    Each policy bootstraps with the GPI action for its own weight. All
    bootstrap actions are chosen before any table changes.
    """
    q_sa = lib.q[:, t.state, t.action]
    if t.terminal:
        target = np.broadcast_to(t.reward, q_sa.shape)
    else:
        actions = gpi_bootstrap_actions(lib, t.next_state)
        policies = np.arange(len(lib))
        target = t.reward + lib.gamma * lib.q[policies, t.next_state, actions]
    lib.q[:, t.state, t.action] = q_sa + learning_rate * (target - q_sa)


###############################################################################
#
def linear_epsilon(step_index: int, start: float, end: float, anneal_steps: int) -> float:
    """Linearly interpolate epsilon from start to end over anneal_steps."""
    if anneal_steps <= 0:
        return end
    fraction = min(1.0, step_index / anneal_steps)
    return start + fraction * (end - start)


###############################################################################
#
def epsilon_greedy(
    lib: PolicyLibrary,
    s: int,
    w: np.ndarray,
    epsilon: float,
    rng: np.random.Generator,
) -> int:
    """
    Uniform random action with probability epsilon, else the GPI action.

    Raises:
        ValueError: If epsilon is outside [0, 1]
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(lib.q.shape[2]))
    return gpi_action(lib, s, w)


# =============================================================================
# Tabular Model
# =============================================================================

Outcome = tuple[int, tuple[float, ...], bool]


###############################################################################
###############################################################################
#
@dataclass
class TabularModel:
    """Empirical outcome counts per visited (s, a)."""

    outcomes: dict[tuple[int, int], dict[Outcome, int]] = field(default_factory=dict)

    ###########################################################################
    #
    def update(self, t: Transition) -> None:
        """Record one observed outcome."""
        key = (t.state, t.action)
        outcome = (
            t.next_state,
            tuple(float(x) for x in t.reward),
            bool(t.terminal),
        )
        counts = self.outcomes.setdefault(key, {})
        counts[outcome] = counts.get(outcome, 0) + 1

    ###########################################################################
    #
    def visited(self, s: int, a: int) -> bool:
        return (s, a) in self.outcomes

    ###########################################################################
    #
    def visit_count(self, s: int, a: int) -> int:
        return sum(self.outcomes.get((s, a), {}).values())

    ###########################################################################
    #
    def sample(
        self, s: int, a: int, rng: np.random.Generator
    ) -> tuple[int, np.ndarray, bool]:
        """
        Draw (s', R, terminal) proportionally to the recorded counts.

        Raises:
            KeyError: If (s, a) was never visited
        """
        counts = self.outcomes.get((s, a))
        if not counts:
            raise KeyError(f"(s={s}, a={a}) has not been visited")
        outcomes = list(counts)
        if len(outcomes) == 1:
            chosen = outcomes[0]
        else:
            cumulative = np.cumsum(list(counts.values()), dtype=float)
            index = int(
                np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right")
            )
            chosen = outcomes[min(index, len(outcomes) - 1)]
        next_state, reward, terminal = chosen
        return next_state, np.array(reward), terminal


# =============================================================================
# Library Values
# =============================================================================


###############################################################################
#
def new_policy_init(lib: PolicyLibrary, w: np.ndarray) -> np.ndarray:
    """Copy of the Q-table of the best incumbent for w; zeros for an empty library."""
    if len(lib) == 0:
        return np.zeros(lib.table_shape)
    return lib.q[lib.best_index(w)].copy()


###############################################################################
#
def estimate_library_values(env: Momdp, lib: PolicyLibrary) -> np.ndarray:
    """
    Value vectors read off the learned Q-tables.

    Each policy acts greedily for its own weight; its value is the learned
    q-vector of that action averaged under mu.
    """
    states = np.arange(env.state_count)
    values = np.zeros((len(lib), env.objective_count))
    for i in range(len(lib)):
        actions = greedy_policy(lib.q[i], lib.weights[i])
        values[i] = env.initial @ lib.q[i, states, actions]
    return values


###############################################################################
#
def learned_gpi_value(env: Momdp, lib: PolicyLibrary, w: np.ndarray) -> float:
    """
    v^GPI_w read off the learned Q-tables: max_i max_a q_i(s, a) . w under mu.

    Comes from the same tables as estimate_library_values, so the two can be
    compared without mixing learned and true values.
    """
    if len(lib) == 0:
        raise ValueError("GPI needs a non-empty policy library")
    return float(env.initial @ (lib.q @ w).max(axis=(0, 2)))


###############################################################################
#
def exact_library_values(env: Momdp, lib: PolicyLibrary) -> np.ndarray:
    """True value vectors of each policy's greedy policy, by policy evaluation."""
    return np.array(
        [
            evaluate_policy(env, greedy_policy(lib.q[i], lib.weights[i]))
            for i in range(len(lib))
        ]
    ).reshape(len(lib), env.objective_count)


# =============================================================================
# GPI Prioritized Dyna
# =============================================================================


###############################################################################
###############################################################################
#
class GpiPdLearner:
    """One seeded GPI-PD run; see the module docstring for the loop."""

    ###########################################################################
    #
    def __init__(
        self,
        env: Momdp,
        cfg: LearnerConfig,
        buffer_cfg: BufferConfig,
        geometry_cfg: GeometryConfig,
        rng: np.random.Generator,
        reference: np.ndarray | None = None,
        grid: np.ndarray | None = None,
    ) -> None:
        self.env = env
        self.cfg = cfg
        self.geometry_cfg = geometry_cfg
        self.reference = reference
        self.grid = grid
        self.behaviour_rng, self.planning_rng, self.evaluation_rng = split_rng(rng, 3)

        self.state = GpiLsState(library=PolicyLibrary.for_env(env))
        self.buffer = PrioritizedBuffer(buffer_cfg)
        self.model = TabularModel()

        first = extremum_weight(env.objective_count, 0)
        self.library.add(np.zeros(self.library.table_shape), first, np.zeros(len(first)))
        self.active: list[int] = [0]
        self.active_position = 0
        self.snapshot = self.library.q.copy()

    ###########################################################################
    #
    @property
    def library(self) -> PolicyLibrary:
        return self.state.library

    ###########################################################################
    #
    @property
    def active_index(self) -> int:
        return self.active[self.active_position]

    ###########################################################################
    #
    def _gpi_value_fn(self) -> Callable[[np.ndarray], float]:
        if self.cfg.gpi_value_estimator == "exact":
            return lambda w: evaluate_gpi_value(self.env, self.library, w)
        if self.cfg.gpi_value_estimator == "learned":
            return lambda w: learned_gpi_value(self.env, self.library, w)
        return lambda w: evaluate_gpi_value(
            self.env,
            self.library,
            w,
            method="rollout",
            rng=self.evaluation_rng,
            rollouts=self.cfg.rollouts,
            horizon=self.cfg.rollout_horizon,
        )

    ###########################################################################
    #
    def _mark_finished_policies(self) -> None:
        """A policy is done when its greedy policy and scalarized Q stopped moving."""
        for i in range(len(self.library)):
            w = self.library.weights[i]
            before = self.snapshot[i] @ w
            after = self.library.q[i] @ w
            same_policy = np.array_equal(before.argmax(axis=1), after.argmax(axis=1))
            drift = float(np.max(np.abs(after - before)))
            if same_policy and drift < self.cfg.done_tolerance:
                if not self.state.is_finished(w, self.geometry_cfg.dedup_tolerance):
                    logger.debug("Policy for w=%s is done", np.round(w, 6))
                self.state.mark_finished(w, self.geometry_cfg.dedup_tolerance)

    ###########################################################################
    #
    def _record(self, env_steps: int) -> None:
        if self.reference is None or self.grid is None:
            return
        values = exact_library_values(self.env, self.library)
        self.state.trace.append(
            measure(
                values,
                self.reference,
                self.grid,
                iteration=env_steps // self.cfg.steps_per_iteration,
                env_steps=env_steps,
                cfg=self.geometry_cfg,
                gpi_values=gpi_values_on_grid(self.env, self.library, self.grid),
            )
        )

    ###########################################################################
    #
    def refresh(self, env_steps: int) -> bool:
        """
        The every-N-steps weight update.

        Library values are always read off the learned Q-tables. The GPI side
        of each corner's improvement comes from gpi_value_estimator: "exact"
        and "rollout" score the true GPI policy against those learned values,
        "learned" reads both sides from the same tables. The metric trace uses
        exact values throughout.

        Returns:
            True when no corner weight is left and learning should stop
        """
        self.library.values = estimate_library_values(self.env, self.library)
        self._mark_finished_policies()
        prune_library(self.state, self.geometry_cfg)
        self._record(env_steps)

        weights = select_weights(
            self.state, self.geometry_cfg, self._gpi_value_fn(), k=self.cfg.top_k
        )
        if not weights:
            logger.info("No corner weights left after %d steps", env_steps)
            return True

        self.active = []
        for w in weights:
            incumbent = self.library.best_index(w)
            index = self.library.add(
                new_policy_init(self.library, w), w, self.library.values[incumbent]
            )
            self.active.append(index)
        self.active_position = 0
        self.state.iteration += 1
        self.snapshot = self.library.q.copy()
        self._reprioritize()
        logger.info(
            "Step %d: training w=%s, library size %d",
            env_steps,
            ", ".join(str(np.round(w, 4)) for w in weights),
            len(self.library),
        )
        return False

    ###########################################################################
    #
    def _reprioritize(self) -> None:
        """Re-score every buffered transition for the newly active weight."""
        if len(self.buffer) == 0 or self.buffer.cfg.sampling == "uniform":
            return
        active = self.active_index
        self.buffer.reprioritize(
            batch_priorities(
                self.library,
                self.buffer.live_batch(),
                self.library.weights[active],
                active,
            )
        )

    ###########################################################################
    #
    def _learn(self, t: Transition) -> None:
        update_library(self.library, t, self.cfg.learning_rate)

    ###########################################################################
    #
    def _plan(self, w: np.ndarray, active: int) -> None:
        """H Dyna updates on buffered (s, a) pairs simulated by the model."""
        for _ in range(self.cfg.dyna_steps):
            handle, stored = self.buffer.sample(self.planning_rng)
            next_state, reward, terminal = self.model.sample(
                stored.state, stored.action, self.planning_rng
            )
            simulated = Transition(
                stored.state, stored.action, reward, next_state, terminal
            )
            self._learn(simulated)
            self.buffer.update_priority(
                handle, priority(self.library, simulated, w, active)
            )

    ###########################################################################
    #
    def run(self) -> GpiLsState:
        """Learn for max_iterations * N steps or until GPI-LS finishes."""
        cfg = self.cfg
        total_steps = cfg.max_iterations * cfg.steps_per_iteration
        s = reset(self.env, self.behaviour_rng)
        episode_steps = 0
        stopped = False

        for t in range(total_steps):
            if t > 0 and t % cfg.steps_per_iteration == 0:
                if self.refresh(t):
                    stopped = True
                    self.state.env_steps = t
                    break

            active = self.active_index
            w = self.library.weights[active]
            epsilon = linear_epsilon(
                t, cfg.epsilon_start, cfg.epsilon_end, cfg.epsilon_anneal_steps
            )
            a = epsilon_greedy(self.library, s, w, epsilon, self.behaviour_rng)
            transition = step(self.env, s, a, self.behaviour_rng)

            self._learn(transition)
            self.buffer.push(
                transition, priority(self.library, transition, w, active)
            )
            self.model.update(transition)
            self._plan(w, active)

            episode_steps += 1
            at_horizon = (
                self.env.horizon is not None and episode_steps >= self.env.horizon
            )
            if transition.terminal or at_horizon:
                s = reset(self.env, self.behaviour_rng)
                episode_steps = 0
                self.active_position = (self.active_position + 1) % len(self.active)
                if len(self.active) > 1:
                    self._reprioritize()
            else:
                s = transition.next_state

        if not stopped:
            self.state.env_steps = total_steps
            self.library.values = estimate_library_values(self.env, self.library)
            prune_library(self.state, self.geometry_cfg)
            self._record(total_steps)
            logger.warning(
                "Step budget of %d exhausted before GPI-LS finished", total_steps
            )
        return self.state


###############################################################################
#
def gpi_pd_run(
    env: Momdp,
    cfg: LearnerConfig,
    buffer_cfg: BufferConfig,
    geometry_cfg: GeometryConfig,
    rng: np.random.Generator,
    reference: np.ndarray | None = None,
    grid: np.ndarray | None = None,
) -> GpiLsState:
    """
    Run tabular GPI Prioritized Dyna.

    Args:
        env: The MOMDP (its known model is used only for evaluation)
        cfg: Learner parameters; dyna_steps = 0 gives model-free GPI-LS
        buffer_cfg: Buffer parameters; sampling = "uniform" gives plain Dyna
        geometry_cfg: Tolerances
        rng: Run generator; split into behaviour, planning and evaluation streams
        reference: Reference CCS; with grid, enables the metric trace
        grid: Evaluation weight grid

    Returns:
        The final GpiLsState (library, finished weights, trace, env_steps)
    """
    learner = GpiPdLearner(
        env, cfg, buffer_cfg, geometry_cfg, rng, reference=reference, grid=grid
    )
    return learner.run()
