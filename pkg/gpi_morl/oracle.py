"""
Ground-truth solvers: exact and perturbed NewPolicy oracles, the exact CCS
via GPI-LS, and a brute-force CCS over every deterministic stationary policy.
"""

# system imports
import hashlib
import itertools

# 3rd party imports
import numpy as np

# project imports
from gpi_morl.config import GeometryConfig, OracleConfig, logger
from gpi_morl.dynamic_programming import evaluate_policy, scalarized_value_iteration
from gpi_morl.geometry import remove_dominated
from gpi_morl.gpi import PolicyLibrary
from gpi_morl.linear_support import GpiLsState, PolicyProposal, run_gpi_ls
from gpi_morl.momdp import Momdp

# Largest |A|^|S| that brute_force_ccs will enumerate
MAX_BRUTE_FORCE_POLICIES = 10_000


###############################################################################
#
def sort_values(values: np.ndarray) -> np.ndarray:
    """Order value vectors lexicographically (first objective first)."""
    return values[np.lexsort(values.T[::-1])]


###############################################################################
###############################################################################
#
class OracleSolver:
    """NewPolicy by scalarized value iteration: always optimal, always done."""

    ###########################################################################
    #
    def __init__(self, env: Momdp, cfg: OracleConfig | None = None) -> None:
        self.env = env
        self.cfg = cfg or OracleConfig()

    ###########################################################################
    #
    def __call__(self, w: np.ndarray, library: PolicyLibrary) -> PolicyProposal:
        solution = scalarized_value_iteration(self.env, w, self.cfg)
        return PolicyProposal(
            q_table=solution.q_values, value=solution.value, done=True
        )


###############################################################################
###############################################################################
#
class PerturbedOracleSolver(OracleSolver):
    """
    An epsilon-suboptimal oracle.

    Returns the optimal policy with its value lowered by epsilon * u, where
    u in [0, 1]^m is fixed per policy (derived from a hash of its actions),
    so the proposal is at most epsilon worse than optimal under any weight.
    """

    ###########################################################################
    #
    def __init__(
        self,
        env: Momdp,
        epsilon: float,
        cfg: OracleConfig | None = None,
        seed: int = 0,
    ) -> None:
        if epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {epsilon}")
        super().__init__(env, cfg)
        self.epsilon = epsilon
        self.seed = seed

    ###########################################################################
    #
    def _offset(self, policy: np.ndarray) -> np.ndarray:
        digest = hashlib.sha256(policy.astype(np.int64).tobytes()).digest()
        key = int.from_bytes(digest[:8], "little")
        rng = np.random.default_rng([self.seed, key])
        return self.epsilon * rng.random(self.env.objective_count)

    ###########################################################################
    #
    def __call__(self, w: np.ndarray, library: PolicyLibrary) -> PolicyProposal:
        solution = scalarized_value_iteration(self.env, w, self.cfg)
        offset = self._offset(solution.policy)
        return PolicyProposal(
            q_table=solution.q_values - offset,
            value=solution.value - offset,
            done=True,
        )


###############################################################################
#
def exact_ccs_state(
    env: Momdp,
    geometry_cfg: GeometryConfig | None = None,
    oracle_cfg: OracleConfig | None = None,
    reference: np.ndarray | None = None,
    grid: np.ndarray | None = None,
) -> GpiLsState:
    """Run GPI-LS with the exact oracle and return the whole loop state."""
    oracle_cfg = oracle_cfg or OracleConfig()
    return run_gpi_ls(
        env,
        OracleSolver(env, oracle_cfg),
        geometry_cfg,
        max_iterations=oracle_cfg.max_iterations,
        reference=reference,
        grid=grid,
    )


###############################################################################
#
def exact_ccs(
    env: Momdp,
    geometry_cfg: GeometryConfig | None = None,
    oracle_cfg: OracleConfig | None = None,
) -> np.ndarray:
    """
    The convex coverage set of a known tabular MOMDP.

    Returns:
        Dominance-pruned value vectors, shape (k, m), sorted lexicographically

    Raises:
        ConvergenceError: If the iteration cap is exceeded
    """
    state = exact_ccs_state(env, geometry_cfg, oracle_cfg)
    ccs = sort_values(remove_dominated(state.library.values, geometry_cfg))
    logger.info("Exact CCS of %s has %d value vectors", env.name, len(ccs))
    return ccs


###############################################################################
#
def brute_force_ccs(
    env: Momdp,
    geometry_cfg: GeometryConfig | None = None,
    max_policies: int = MAX_BRUTE_FORCE_POLICIES,
) -> np.ndarray:
    """
    CCS by evaluating every deterministic stationary policy.

    Raises:
        ValueError: If |A|^|S| exceeds max_policies
    """
    count = env.action_count**env.state_count
    if count > max_policies:
        raise ValueError(
            f"{count} deterministic policies exceed the brute-force cap {max_policies}"
        )
    values = np.array(
        [
            evaluate_policy(env, np.array(actions))
            for actions in itertools.product(
                range(env.action_count), repeat=env.state_count
            )
        ]
    )
    return sort_values(remove_dominated(values, geometry_cfg))
