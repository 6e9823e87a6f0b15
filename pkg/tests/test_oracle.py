"""Tests for the exact and perturbed oracles and the CCS solvers."""

import numpy as np
import pytest

from gpi_morl.environments import build_synthetic, synthetic_fixture
from gpi_morl.geometry import equidistant_weights
from gpi_morl.gpi import PolicyLibrary
from gpi_morl.linear_support import run_gpi_ls
from gpi_morl.metrics import corner_augmented_weights, maximum_utility_loss
from gpi_morl.momdp import Momdp
from gpi_morl.oracle import (
    OracleSolver,
    PerturbedOracleSolver,
    brute_force_ccs,
    exact_ccs,
    sort_values,
)

# Minimum steps to each Deep Sea Treasure, in treasure order
DST_STEPS = (1, 3, 5, 7, 8, 9, 13, 14, 17, 19)
DST_TREASURES = (0.7, 8.2, 11.5, 14.0, 15.1, 16.1, 19.6, 20.3, 22.4, 23.7)


def dst_expected_ccs(gamma: float) -> np.ndarray:
    """(T gamma^(n-1), -(1 - gamma^n) / (1 - gamma)) for every treasure."""
    return np.array(
        [
            [t * gamma ** (n - 1), -(1 - gamma**n) / (1 - gamma)]
            for t, n in zip(DST_TREASURES, DST_STEPS, strict=True)
        ]
    )


class TestOracleSolver:
    """Tests for the exact NewPolicy oracle."""

    def test_proposal_is_done_and_optimal(self, single_state_env: Momdp) -> None:
        proposal = OracleSolver(single_state_env)(
            np.array([0.0, 1.0]), PolicyLibrary.for_env(single_state_env)
        )

        assert proposal.done
        np.testing.assert_allclose(proposal.value, [0.0, 2.0])
        assert proposal.q_table.shape == (1, 2, 2)


class TestPerturbedOracleSolver:
    """Tests for the epsilon-suboptimal oracle."""

    def test_offset_bounded_and_stable(self, four_state_env: Momdp) -> None:
        """
        Given an exact and a perturbed oracle
        When both solve the same weight twice
        Then the perturbed value is lower by at most epsilon per objective, consistently
        """
        lib = PolicyLibrary.for_env(four_state_env)
        w = np.array([0.4, 0.6])
        exact = OracleSolver(four_state_env)(w, lib)
        solver = PerturbedOracleSolver(four_state_env, epsilon=0.05, seed=3)

        first = solver(w, lib)
        second = solver(w, lib)

        gap = exact.value - first.value
        assert np.all(gap >= 0.0)
        assert np.all(gap <= 0.05)
        np.testing.assert_array_equal(first.value, second.value)
        np.testing.assert_allclose(exact.q_table - first.q_table, np.broadcast_to(gap, exact.q_table.shape))

    def test_negative_epsilon(self, four_state_env: Momdp) -> None:
        with pytest.raises(ValueError):
            PerturbedOracleSolver(four_state_env, epsilon=-0.1)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_gpi_ls_with_perturbed_oracle_is_epsilon_ccs(
        self, four_state_env: Momdp, seed: int
    ) -> None:
        """
        Given GPI-LS driven by an oracle that loses up to epsilon
        When the loop finishes
        Then the maximum utility loss to the exact CCS is at most epsilon
        """
        epsilon = 0.05
        reference = exact_ccs(four_state_env)

        state = run_gpi_ls(
            four_state_env, PerturbedOracleSolver(four_state_env, epsilon, seed=seed)
        )

        values = state.library.values
        weights = corner_augmented_weights(values, reference, equidistant_weights(101, 2))
        assert maximum_utility_loss(values, reference, weights) <= epsilon + 1e-6


class TestExactCcs:
    """Tests for exact_ccs() and brute_force_ccs()."""

    def test_interleaved(self, interleaved_env: Momdp) -> None:
        ccs = exact_ccs(interleaved_env)

        np.testing.assert_allclose(ccs, [[0.0, 2.0], [28 / 15, 26 / 15], [2.0, 0.0]])

    def test_single_state(self, single_state_env: Momdp) -> None:
        np.testing.assert_allclose(exact_ccs(single_state_env), [[0.0, 2.0], [2.0, 0.0]])

    @pytest.mark.slow
    def test_deep_sea_treasure(self, dst_env: Momdp) -> None:
        """
        Given the canonical Deep Sea Treasure at gamma = 0.99
        When the exact CCS is computed
        Then every treasure appears, reached by its shortest path
        """
        ccs = exact_ccs(dst_env)

        np.testing.assert_allclose(ccs, dst_expected_ccs(0.99), atol=1e-8)

    @pytest.mark.parametrize(
        "name",
        [f"random-{seed}-{states}-2" for seed, states in zip(range(12), [3, 4, 5] * 4)]
        + [f"random-{seed}-{states}-3" for seed, states in zip(range(12, 20), [3, 4] * 4)],
    )
    def test_matches_brute_force(self, name: str) -> None:
        """Test that GPI-LS with the exact oracle recovers the enumerated CCS."""
        env = build_synthetic(synthetic_fixture(name))

        expected = brute_force_ccs(env)
        found = exact_ccs(env)

        assert found.shape == expected.shape
        np.testing.assert_allclose(found, expected, atol=1e-8)

    def test_brute_force_cap(self, dst_env: Momdp) -> None:
        with pytest.raises(ValueError, match="brute-force cap"):
            brute_force_ccs(dst_env)


class TestSortValues:
    """Tests for sort_values()."""

    def test_lexicographic(self) -> None:
        values = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, -1.0]])

        np.testing.assert_array_equal(
            sort_values(values), [[0.0, 2.0], [1.0, -1.0], [1.0, 0.0]]
        )
