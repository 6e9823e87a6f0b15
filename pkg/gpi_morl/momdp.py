"""
MOMDP data structure, vector reward arithmetic, and seeded simulation.

Every MOMDP is stored as dense outcome tables: for each (state, action) pair
there are K outcome slots, each with a probability, a next state, a reward
vector and a terminal flag. Deterministic environments use K = 1.
"""

# system imports
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

# 3rd party imports
import numpy as np

# =============================================================================
# Constants
# =============================================================================

# Tolerance for a probability vector or weight vector to sum to 1
SUM_TOLERANCE = 1e-9

# Weight entries this far below zero are rounding noise and clipped to 0
NEGATIVE_WEIGHT_TOLERANCE = 1e-12


# =============================================================================
# Weights and Value Vectors
# =============================================================================


###############################################################################
#
def as_weight_vector(entries: Sequence[float] | np.ndarray) -> np.ndarray:
    """
    Validate a point on the weight simplex.

    Args:
        entries: The m preference weights

    Returns:
        A float array with tiny negative entries clipped and renormalized

    Raises:
        ValueError: If m < 2, an entry is negative, or the sum is not 1
    """
    w = np.asarray(entries, dtype=float)
    if w.ndim != 1 or w.shape[0] < 2:
        raise ValueError(f"A weight vector needs at least 2 entries: {w!r}")
    if not np.all(np.isfinite(w)):
        raise ValueError(f"Weight vector has non-finite entries: {w!r}")
    if w.min() < -NEGATIVE_WEIGHT_TOLERANCE:
        raise ValueError(f"Weight vector has negative entries: {w!r}")
    total = w.sum()
    if abs(total - 1.0) > SUM_TOLERANCE:
        raise ValueError(f"Weight vector sums to {total!r}, not 1")
    w = np.clip(w, 0.0, None)
    return w / w.sum()


###############################################################################
#
def extremum_weight(m: int, index: int) -> np.ndarray:
    """Return the simplex vertex that puts all weight on one objective."""
    if not 0 <= index < m:
        raise IndexError(f"Objective index {index} out of range for m={m}")
    w = np.zeros(m)
    w[index] = 1.0
    return w


###############################################################################
#
def scalarize(v: Sequence[float] | np.ndarray, w: Sequence[float] | np.ndarray) -> float:
    """
    Linear utility of a value vector under a weight vector.

    Args:
        v: Value (or reward) vector of length m
        w: Weight vector of length m

    Returns:
        The dot product v . w

    Raises:
        ValueError: If the lengths differ
    """
    v_arr = np.asarray(v, dtype=float)
    w_arr = np.asarray(w, dtype=float)
    if v_arr.shape[-1] != w_arr.shape[-1]:
        raise ValueError(
            f"Dimension mismatch: value has {v_arr.shape[-1]} objectives, "
            f"weight has {w_arr.shape[-1]}"
        )
    return float(v_arr @ w_arr)


# =============================================================================
# Random Streams
# =============================================================================


###############################################################################
#
def make_rng(seed: int) -> np.random.Generator:
    """Create the generator for one run seed (see resources/guides/seeding.md)."""
    return np.random.default_rng(np.random.SeedSequence(seed))


###############################################################################
#
def split_rng(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Spawn n independent child streams from a generator."""
    return rng.spawn(n)


# =============================================================================
# MOMDP Data Structures
# =============================================================================


###############################################################################
###############################################################################
#
@dataclass(frozen=True)
class Transition:
    """One sampled step: (S_t, A_t, R_t, S_t+1, terminal)."""

    state: int
    action: int
    reward: np.ndarray
    next_state: int
    terminal: bool


###############################################################################
###############################################################################
#
@dataclass(frozen=True, eq=False)
class Momdp:
    """
    A tabular multi-objective MDP.

    Attributes:
        probs: Outcome probabilities, shape (S, A, K)
        next_states: Next state per outcome, shape (S, A, K)
        rewards: Reward vector per outcome, shape (S, A, K, m)
        terminals: Whether an outcome ends the episode, shape (S, A, K)
        initial: Initial state distribution mu, shape (S,)
        gamma: Discount factor in [0, 1)
        horizon: Optional episode step cap
        name: Human readable label
    """

    probs: np.ndarray
    next_states: np.ndarray
    rewards: np.ndarray
    terminals: np.ndarray
    initial: np.ndarray
    gamma: float
    horizon: int | None = None
    name: str = "momdp"
    _cumulative: np.ndarray = field(init=False, repr=False)

    ###########################################################################
    #
    def __post_init__(self) -> None:
        probs = np.array(self.probs, dtype=float)
        next_states = np.array(self.next_states, dtype=np.int64)
        rewards = np.array(self.rewards, dtype=float)
        terminals = np.array(self.terminals, dtype=bool)
        initial = np.array(self.initial, dtype=float)

        if probs.ndim != 3:
            raise ValueError(f"probs must have shape (S, A, K), got {probs.shape}")
        states, actions, outcomes = probs.shape
        if states == 0:
            raise ValueError("A MOMDP needs at least one state")
        if actions == 0:
            raise ValueError("A MOMDP needs at least one action")
        if outcomes == 0:
            raise ValueError("Every (state, action) needs at least one outcome")
        if next_states.shape != probs.shape:
            raise ValueError(
                f"next_states shape {next_states.shape} != probs shape {probs.shape}"
            )
        if terminals.shape != probs.shape:
            raise ValueError(
                f"terminals shape {terminals.shape} != probs shape {probs.shape}"
            )
        if rewards.ndim != 4 or rewards.shape[:3] != probs.shape:
            raise ValueError(
                f"rewards must have shape (S, A, K, m), got {rewards.shape}"
            )
        if rewards.shape[3] == 0:
            raise ValueError("A MOMDP needs at least one objective")
        if not np.all(np.isfinite(rewards)):
            raise ValueError("Reward vectors must be finite")

        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise ValueError("Outcome probabilities must be finite and >= 0")
        row_sums = probs.sum(axis=2)
        bad = np.argwhere(np.abs(row_sums - 1.0) > SUM_TOLERANCE)
        if bad.size:
            s, a = bad[0]
            raise ValueError(
                f"Transition distribution of (s={s}, a={a}) sums to "
                f"{row_sums[s, a]!r}, not 1"
            )
        if np.any(next_states < 0) or np.any(next_states >= states):
            raise ValueError("Next states must be valid state indices")

        if initial.shape != (states,):
            raise ValueError(
                f"Initial distribution must have shape ({states},), got {initial.shape}"
            )
        if np.any(initial < 0) or abs(initial.sum() - 1.0) > SUM_TOLERANCE:
            raise ValueError(
                f"Initial distribution must be non-negative and sum to 1, "
                f"sums to {initial.sum()!r}"
            )
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma!r}")
        if self.horizon is not None and self.horizon <= 0:
            raise ValueError(f"horizon must be positive, got {self.horizon!r}")

        # Frozen dataclass: normalize stored arrays and make them read-only
        for name, value in (
            ("probs", probs),
            ("next_states", next_states),
            ("rewards", rewards),
            ("terminals", terminals),
            ("initial", initial),
        ):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "gamma", float(self.gamma))
        cumulative = np.cumsum(probs, axis=2)
        cumulative.setflags(write=False)
        object.__setattr__(self, "_cumulative", cumulative)

    ###########################################################################
    #
    @property
    def state_count(self) -> int:
        return int(self.probs.shape[0])

    ###########################################################################
    #
    @property
    def action_count(self) -> int:
        return int(self.probs.shape[1])

    ###########################################################################
    #
    @property
    def objective_count(self) -> int:
        return int(self.rewards.shape[3])

    ###########################################################################
    #
    @property
    def expected_rewards(self) -> np.ndarray:
        """Expected reward vector r(s, a), shape (S, A, m)."""
        return np.einsum("sak,sakm->sam", self.probs, self.rewards)

    ###########################################################################
    #
    @property
    def continuation_matrix(self) -> np.ndarray:
        """
        Discount-free transition kernel that excludes terminal outcomes.

        Returns:
            P[s, a, s'] = probability of reaching s' without terminating,
            shape (S, A, S)
        """
        states = self.state_count
        kernel = np.zeros((states, self.action_count, states))
        mass = self.probs * ~self.terminals
        s_idx, a_idx, _ = np.indices(self.probs.shape)
        np.add.at(kernel, (s_idx, a_idx, self.next_states), mass)
        return kernel

    ###########################################################################
    #
    @property
    def is_deterministic(self) -> bool:
        """True when every step distribution and mu are point masses."""
        return bool(
            np.all(self.probs.max(axis=2) == 1.0) and self.initial.max() == 1.0
        )

    ###########################################################################
    #
    @property
    def max_reward_norm(self) -> float:
        """r_max: largest Euclidean norm of any reachable reward vector."""
        norms = np.linalg.norm(self.rewards, axis=3)
        return float(np.max(np.where(self.probs > 0, norms, 0.0)))


# =============================================================================
# Simulation
# =============================================================================


###############################################################################
#
def _check_state_action(env: Momdp, s: int, a: int) -> None:
    if not 0 <= s < env.state_count:
        raise IndexError(f"State {s} out of range [0, {env.state_count})")
    if not 0 <= a < env.action_count:
        raise IndexError(f"Action {a} out of range [0, {env.action_count})")


###############################################################################
#
def step(env: Momdp, s: int, a: int, rng: np.random.Generator) -> Transition:
    """
    Sample one transition from p(. | s, a).

    Args:
        env: The MOMDP
        s: Current state
        a: Action taken
        rng: Random stream; not consumed when the outcome is a point mass

    Returns:
        The sampled Transition

    Raises:
        IndexError: If s or a is out of range
    """
    _check_state_action(env, s, a)
    row = env.probs[s, a]
    if row.shape[0] == 1 or row.max() == 1.0:
        k = int(np.argmax(row))
    else:
        k = int(np.searchsorted(env._cumulative[s, a], rng.random(), side="right"))
        # rounding can leave u past the last cumulative sum
        k = min(k, int(np.flatnonzero(row > 0)[-1]))
    return Transition(
        state=s,
        action=a,
        reward=env.rewards[s, a, k].copy(),
        next_state=int(env.next_states[s, a, k]),
        terminal=bool(env.terminals[s, a, k]),
    )


###############################################################################
#
def reset(env: Momdp, rng: np.random.Generator) -> int:
    """Draw a start state from mu."""
    if env.initial.max() == 1.0:
        return int(np.argmax(env.initial))
    cumulative = np.cumsum(env.initial)
    index = int(np.searchsorted(cumulative, rng.random(), side="right"))
    return min(index, int(np.flatnonzero(env.initial > 0)[-1]))


###############################################################################
#
def rollout(
    env: Momdp,
    policy: Callable[[int], int],
    rng: np.random.Generator,
    horizon: int | None = None,
) -> np.ndarray:
    """
    Simulate one episode and return its discounted vector return.

    Args:
        env: The MOMDP
        policy: Maps a state to an action
        rng: Random stream for the start state and transitions
        horizon: Step cap; defaults to the environment's horizon

    Returns:
        sum_t gamma^t R_t, shape (m,)

    Raises:
        ValueError: If neither the caller nor the environment sets a horizon
    """
    cap = horizon if horizon is not None else env.horizon
    if cap is None:
        raise ValueError("rollout needs a horizon when the MOMDP has none")

    total = np.zeros(env.objective_count)
    discount = 1.0
    s = reset(env, rng)
    for _ in range(cap):
        t = step(env, s, policy(s), rng)
        total += discount * t.reward
        if t.terminal:
            break
        discount *= env.gamma
        s = t.next_state
    return total
