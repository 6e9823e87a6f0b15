"""
Generalized policy evaluation and improvement over a policy library,
one-step GPI targets and GPI-based experience priorities.
"""

# system imports
from collections.abc import Sequence

# 3rd party imports
import numpy as np

# project imports
from gpi_morl.geometry import max_scalarized
from gpi_morl.momdp import Momdp, Transition
from gpi_morl.replay import TransitionBatch

# =============================================================================
# Policy Library
# =============================================================================


###############################################################################
###############################################################################
#
class PolicyLibrary:
    """
    The policy set Pi with its value set and the weight each policy targets.

    Q-tables are kept stacked in one array so GPI is a single reduction.

    Attributes:
        q: Multi-objective Q-tables, shape (n, S, A, m)
        weights: Weight each policy was trained for, shape (n, m)
        values: Value vector of each policy, shape (n, m)
        gamma: Discount factor shared by every policy
    """

    ###########################################################################
    #
    def __init__(
        self, state_count: int, action_count: int, objective_count: int, gamma: float
    ) -> None:
        self.gamma = float(gamma)
        self.q = np.zeros((0, state_count, action_count, objective_count))
        self.weights = np.zeros((0, objective_count))
        self.values = np.zeros((0, objective_count))

    ###########################################################################
    #
    @classmethod
    def for_env(cls, env: Momdp) -> "PolicyLibrary":
        """An empty library shaped for an environment."""
        return cls(env.state_count, env.action_count, env.objective_count, env.gamma)

    ###########################################################################
    #
    def __len__(self) -> int:
        return int(self.q.shape[0])

    ###########################################################################
    #
    @property
    def table_shape(self) -> tuple[int, int, int]:
        """(S, A, m) of every Q-table in the library."""
        return tuple(self.q.shape[1:])  # type: ignore[return-value]

    ###########################################################################
    #
    def add(
        self,
        q_table: np.ndarray,
        weight: Sequence[float] | np.ndarray,
        value: Sequence[float] | np.ndarray,
    ) -> int:
        """
        Append a policy.

        Returns:
            The new policy's index
        """
        q_table = np.asarray(q_table, dtype=float)
        if q_table.shape != self.table_shape:
            raise ValueError(
                f"Q-table shape {q_table.shape} != library shape {self.table_shape}"
            )
        self.q = np.concatenate([self.q, q_table[None]], axis=0)
        self.weights = np.vstack([self.weights, np.asarray(weight, dtype=float)])
        self.values = np.vstack([self.values, np.asarray(value, dtype=float)])
        return len(self) - 1

    ###########################################################################
    #
    def keep(self, indices: Sequence[int]) -> None:
        """Retain only the given policies, in the given order."""
        index = np.asarray(indices, dtype=np.int64)
        self.q = self.q[index]
        self.weights = self.weights[index]
        self.values = self.values[index]

    ###########################################################################
    #
    def best_index(self, w: np.ndarray) -> int:
        """Index of the policy with the highest v . w (lowest index on ties)."""
        if len(self) == 0:
            raise ValueError("Policy library is empty")
        return max_scalarized(self.values, w)[1]

    ###########################################################################
    #
    def copy(self) -> "PolicyLibrary":
        clone = PolicyLibrary(*self.table_shape, gamma=self.gamma)
        clone.q = self.q.copy()
        clone.weights = self.weights.copy()
        clone.values = self.values.copy()
        return clone


# =============================================================================
# GPE / GPI
# =============================================================================


###############################################################################
#
def gpe(lib: PolicyLibrary, i: int, s: int, a: int, w: np.ndarray) -> float:
    """
    Generalized policy evaluation: q^{pi_i}(s, a) . w.

    Raises:
        IndexError: If the policy, state or action index is out of range
    """
    n, states, actions, _ = lib.q.shape
    if not 0 <= i < n:
        raise IndexError(f"Policy index {i} out of range [0, {n})")
    if not 0 <= s < states:
        raise IndexError(f"State {s} out of range [0, {states})")
    if not 0 <= a < actions:
        raise IndexError(f"Action {a} out of range [0, {actions})")
    return float(lib.q[i, s, a] @ w)


###############################################################################
#
def gpi_action(lib: PolicyLibrary, s: int, w: np.ndarray) -> int:
    """
    argmax_a max_i q^{pi_i}(s, a) . w, lowest action index on ties.

    Raises:
        ValueError: If the library is empty
    """
    if len(lib) == 0:
        raise ValueError("GPI needs a non-empty policy library")
    scores = lib.q[:, s] @ w
    return int(np.argmax(scores.max(axis=0)))


###############################################################################
#
def gpi_policy(lib: PolicyLibrary, w: np.ndarray) -> np.ndarray:
    """The GPI action of every state, shape (S,)."""
    if len(lib) == 0:
        raise ValueError("GPI needs a non-empty policy library")
    scores = np.einsum("nsam,m->nsa", lib.q, w)
    return np.argmax(scores.max(axis=0), axis=1)


###############################################################################
#
def greedy_policy(q_table: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Greedy actions of a single Q-table under w, shape (S,)."""
    return np.argmax(q_table @ w, axis=1)


###############################################################################
#
def gpi_suboptimality_bound(
    lib: PolicyLibrary, w: np.ndarray, r_max: float, q_error: float = 0.0
) -> float:
    """
    Upper bound on q*_w(s, a) - q^GPI_w(s, a) at every (s, a).

    Args:
        lib: Library of policies, each optimal for its own weight
        w: Target weight
        r_max: Largest Euclidean norm of a reward vector
        q_error: Max-norm error of the library Q-tables

    Returns:
        2 / (1 - gamma) * (r_max * min_i ||w - w_i|| + q_error)
    """
    if len(lib) == 0:
        raise ValueError("GPI needs a non-empty policy library")
    distance = float(np.min(np.linalg.norm(lib.weights - w, axis=1)))
    return 2.0 / (1.0 - lib.gamma) * (r_max * distance + q_error)


# =============================================================================
# Targets and Priorities
# =============================================================================


###############################################################################
#
def _gpi_target(
    q_stack: np.ndarray, t: Transition, w: np.ndarray, gamma: float
) -> float:
    """Shared arithmetic for one-step GPI targets and single-table TD errors."""
    target = float(t.reward @ w)
    if t.terminal:
        return target
    return target + gamma * float(np.max(q_stack[:, t.next_state] @ w))


###############################################################################
#
def one_step_gpi_target(lib: PolicyLibrary, t: Transition, w: np.ndarray) -> float:
    """R . w + gamma * max_{a'} max_i q^{pi_i}(s', a') . w, no bootstrap past a terminal."""
    if len(lib) == 0:
        raise ValueError("GPI needs a non-empty policy library")
    return _gpi_target(lib.q, t, w, lib.gamma)


###############################################################################
#
def priority(
    lib: PolicyLibrary, t: Transition, w: np.ndarray, active: int
) -> float:
    """
    GPI-based priority |q^{1-GPI}_w(s, a) - q^{pi_active}_w(s, a)|.

    With a single policy this is exactly the absolute TD error of td_error.
    """
    if not 0 <= active < len(lib):
        raise IndexError(f"Policy index {active} out of range [0, {len(lib)})")
    current = float(lib.q[active, t.state, t.action] @ w)
    return abs(_gpi_target(lib.q, t, w, lib.gamma) - current)


###############################################################################
#
def batch_priorities(
    lib: PolicyLibrary, batch: TransitionBatch, w: np.ndarray, active: int
) -> np.ndarray:
    """priority() of every transition in a batch, computed in one pass."""
    if not 0 <= active < len(lib):
        raise IndexError(f"Policy index {active} out of range [0, {len(lib)})")
    best_next = (lib.q @ w).max(axis=(0, 2))
    bootstrap = np.where(batch.terminals, 0.0, best_next[batch.next_states])
    targets = batch.rewards @ w + lib.gamma * bootstrap
    current = (lib.q[active] @ w)[batch.states, batch.actions]
    return np.abs(targets - current)


###############################################################################
#
def td_error(
    q_table: np.ndarray, t: Transition, w: np.ndarray, gamma: float
) -> float:
    """Scalarized one-step Q-learning TD error of a single table."""
    current = float(q_table[t.state, t.action] @ w)
    return _gpi_target(q_table[np.newaxis], t, w, gamma) - current


###############################################################################
#
def expected_one_step_gpi_target(
    lib: PolicyLibrary, env: Momdp, s: int, a: int, w: np.ndarray
) -> float:
    """The one-step GPI target in expectation over the known outcomes of (s, a)."""
    if len(lib) == 0:
        raise ValueError("GPI needs a non-empty policy library")
    # max_i max_a' q_i(s', a') . w for every state
    best_next = (lib.q @ w).max(axis=(0, 2))
    probs = env.probs[s, a]
    rewards = env.rewards[s, a] @ w
    bootstrap = np.where(env.terminals[s, a], 0.0, best_next[env.next_states[s, a]])
    return float(probs @ (rewards + env.gamma * bootstrap))


###############################################################################
#
def expected_priority(
    lib: PolicyLibrary, env: Momdp, s: int, a: int, w: np.ndarray, active: int
) -> float:
    """|E[q^{1-GPI}_w(s, a)] - q^{pi_active}_w(s, a)| under the true model."""
    current = gpe(lib, active, s, a, w)
    return abs(expected_one_step_gpi_target(lib, env, s, a, w) - current)
