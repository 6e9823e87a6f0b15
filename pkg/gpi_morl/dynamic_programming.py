"""
Exact dynamic programming on known tabular MOMDPs: scalarized value
iteration and vector-valued policy evaluation.
"""

# system imports
from typing import NamedTuple

# 3rd party imports
import numpy as np

# project imports
from gpi_morl.config import OracleConfig, logger
from gpi_morl.momdp import Momdp

# Relative residual accepted from the policy evaluation linear solve
RESIDUAL_TOLERANCE = 1e-8


###############################################################################
###############################################################################
#
class ConvergenceError(RuntimeError):
    """An iterative procedure hit its iteration cap or a singular system."""


###############################################################################
###############################################################################
#
class ScalarizedSolution(NamedTuple):
    """Result of scalarized value iteration for one weight."""

    policy: np.ndarray  # greedy action per state, shape (S,)
    value: np.ndarray  # multi-objective value under mu, shape (m,)
    optimum: float  # v*_w = value . w
    q_values: np.ndarray  # vector Q of the policy, shape (S, A, m)


###############################################################################
#
def _check_policy(env: Momdp, policy: np.ndarray) -> np.ndarray:
    actions = np.asarray(policy, dtype=np.int64)
    if actions.shape != (env.state_count,):
        raise ValueError(
            f"Policy must give one action per state, got shape {actions.shape}"
        )
    if np.any(actions < 0) or np.any(actions >= env.action_count):
        raise IndexError("Policy contains out-of-range actions")
    return actions


###############################################################################
#
def policy_evaluation(env: Momdp, policy: np.ndarray) -> np.ndarray:
    """
    Multi-objective state values of a deterministic stationary policy.

    Solves (I - gamma P_pi) V = r_pi with the m objectives as right-hand sides.

    Args:
        env: The MOMDP
        policy: Action per state, shape (S,)

    Returns:
        V, shape (S, m)

    Raises:
        ConvergenceError: If the system is singular or the residual is too large
    """
    actions = _check_policy(env, policy)
    states = np.arange(env.state_count)
    r_pi = env.expected_rewards[states, actions]
    p_pi = env.continuation_matrix[states, actions]
    system = np.eye(env.state_count) - env.gamma * p_pi
    try:
        values = np.linalg.solve(system, r_pi)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"Policy evaluation system is singular: {exc}") from exc

    residual = np.max(np.abs(system @ values - r_pi), initial=0.0)
    scale = max(1.0, float(np.max(np.abs(r_pi), initial=0.0)))
    if not np.isfinite(residual) or residual > RESIDUAL_TOLERANCE * scale:
        raise ConvergenceError(f"Policy evaluation residual {residual!r} too large")
    return values


###############################################################################
#
def policy_q_values(env: Momdp, policy: np.ndarray) -> np.ndarray:
    """Vector action values q^pi(s, a), shape (S, A, m)."""
    values = policy_evaluation(env, policy)
    return env.expected_rewards + env.gamma * env.continuation_matrix @ values


###############################################################################
#
def initial_value(env: Momdp, state_values: np.ndarray) -> np.ndarray:
    """Average state values under mu."""
    return env.initial @ state_values


###############################################################################
#
def evaluate_policy(env: Momdp, policy: np.ndarray) -> np.ndarray:
    """v^pi: the policy's multi-objective value under mu, shape (m,)."""
    return initial_value(env, policy_evaluation(env, policy))


###############################################################################
#
def optimal_scalar_q(
    env: Momdp, w: np.ndarray, cfg: OracleConfig | None = None
) -> np.ndarray:
    """
    Optimal action values of the scalarized MDP with reward r . w.

    Returns:
        Q*_w, shape (S, A)

    Raises:
        ConvergenceError: If the sweeps do not reach vi_tolerance in time
    """
    cfg = cfg or OracleConfig()
    rewards = env.expected_rewards @ w
    kernel = env.continuation_matrix
    v = np.zeros(env.state_count)
    for sweep in range(1, cfg.vi_max_sweeps + 1):
        q = rewards + env.gamma * kernel @ v
        v_new = q.max(axis=1)
        delta = float(np.max(np.abs(v_new - v)))
        v = v_new
        if delta <= cfg.vi_tolerance:
            logger.debug("Value iteration converged after %d sweeps", sweep)
            return rewards + env.gamma * kernel @ v
    raise ConvergenceError(
        f"Value iteration did not converge within {cfg.vi_max_sweeps} sweeps"
    )


###############################################################################
#
def scalarized_value_iteration(
    env: Momdp, w: np.ndarray, cfg: OracleConfig | None = None
) -> ScalarizedSolution:
    """
    Solve the MDP with scalarized reward r . w.

    The greedy policy of the converged scalar table is then evaluated exactly
    on the vector reward to obtain its full value vector.

    Args:
        env: The MOMDP
        w: Weight vector
        cfg: Tolerance and sweep cap

    Returns:
        ScalarizedSolution

    Raises:
        ConvergenceError: On non-convergence
    """
    weight = np.asarray(w, dtype=float)
    if weight.shape != (env.objective_count,):
        raise ValueError(
            f"Weight has shape {weight.shape}, MOMDP has {env.objective_count} objectives"
        )
    q_scalar = optimal_scalar_q(env, weight, cfg)
    policy = np.argmax(q_scalar, axis=1)
    q_vector = policy_q_values(env, policy)
    value = initial_value(env, policy_evaluation(env, policy))
    return ScalarizedSolution(
        policy=policy,
        value=value,
        optimum=float(value @ weight),
        q_values=q_vector,
    )
