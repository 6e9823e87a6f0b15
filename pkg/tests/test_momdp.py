"""Tests for the MOMDP data structure, weight arithmetic and simulation."""

import numpy as np
import pytest
from pytest_mock import MockerFixture

from gpi_morl.momdp import (
    Momdp,
    as_weight_vector,
    extremum_weight,
    make_rng,
    reset,
    rollout,
    scalarize,
    split_rng,
    step,
)


def two_outcome_env(p_first: float = 0.25) -> Momdp:
    """One state, one action, two outcomes with rewards (1, 0) and (0, 1)."""
    return Momdp(
        probs=[[[p_first, 1.0 - p_first]]],
        next_states=[[[0, 0]]],
        rewards=[[[[1.0, 0.0], [0.0, 1.0]]]],
        terminals=[[[False, False]]],
        initial=[1.0],
        gamma=0.9,
    )


class TestWeights:
    """Tests for weight vectors and scalarization."""

    def test_valid_weight(self) -> None:
        np.testing.assert_allclose(as_weight_vector([0.25, 0.75]), [0.25, 0.75])

    def test_tiny_negative_entries_are_clipped(self) -> None:
        """Test that rounding noise below zero is clipped, not rejected."""
        w = as_weight_vector([1.0 + 1e-13, -1e-13])

        assert w.min() >= 0.0
        assert w.sum() == pytest.approx(1.0)

    @pytest.mark.parametrize(
        ("entries", "fragment"),
        [
            ([1.0], "at least 2"),
            ([1.2, -0.2], "negative"),
            ([0.5, 0.4], "sums to"),
            ([np.nan, 1.0], "non-finite"),
        ],
    )
    def test_invalid_weight(self, entries: list[float], fragment: str) -> None:
        with pytest.raises(ValueError, match=fragment):
            as_weight_vector(entries)

    def test_extremum_weight(self) -> None:
        np.testing.assert_array_equal(extremum_weight(3, 1), [0.0, 1.0, 0.0])

        with pytest.raises(IndexError):
            extremum_weight(3, 3)

    def test_scalarize(self) -> None:
        assert scalarize([1.0, 2.0], [0.5, 0.5]) == 1.5

    def test_scalarize_dimension_mismatch(self) -> None:
        with pytest.raises(ValueError, match="Dimension mismatch"):
            scalarize([1.0, 2.0, 3.0], [0.5, 0.5])


class TestMomdpValidation:
    """Tests for Momdp construction checks."""

    def test_probabilities_must_sum_to_one(self) -> None:
        """
        Given a (state, action) whose outcome probabilities sum to 0.9
        When the MOMDP is built
        Then it is rejected naming the pair
        """
        with pytest.raises(ValueError, match=r"\(s=0, a=0\) sums to"):
            Momdp(
                probs=[[[0.4, 0.5]]],
                next_states=[[[0, 0]]],
                rewards=[[[[1.0, 0.0], [0.0, 1.0]]]],
                terminals=[[[False, False]]],
                initial=[1.0],
                gamma=0.9,
            )

    def test_needs_an_action(self) -> None:
        with pytest.raises(ValueError, match="at least one action"):
            Momdp(
                probs=np.ones((1, 0, 1)),
                next_states=np.zeros((1, 0, 1), dtype=int),
                rewards=np.zeros((1, 0, 1, 2)),
                terminals=np.zeros((1, 0, 1), dtype=bool),
                initial=[1.0],
                gamma=0.9,
            )

    @pytest.mark.parametrize("gamma", [1.0, -0.1])
    def test_gamma_range(self, gamma: float) -> None:
        with pytest.raises(ValueError, match="gamma"):
            Momdp(
                probs=[[[1.0]]],
                next_states=[[[0]]],
                rewards=[[[[1.0, 0.0]]]],
                terminals=[[[False]]],
                initial=[1.0],
                gamma=gamma,
            )

    def test_next_state_range(self) -> None:
        with pytest.raises(ValueError, match="valid state indices"):
            Momdp(
                probs=[[[1.0]]],
                next_states=[[[1]]],
                rewards=[[[[1.0, 0.0]]]],
                terminals=[[[False]]],
                initial=[1.0],
                gamma=0.5,
            )

    def test_arrays_are_copied_and_read_only(self) -> None:
        """
        Given a MOMDP built from a caller-owned array
        When the caller mutates the array afterwards
        Then the MOMDP is unaffected and its own arrays reject writes
        """
        rewards = np.array([[[[1.0, 0.0]]]])
        env = Momdp(
            probs=[[[1.0]]],
            next_states=[[[0]]],
            rewards=rewards,
            terminals=[[[False]]],
            initial=[1.0],
            gamma=0.5,
        )

        rewards[0, 0, 0, 0] = 99.0

        assert env.rewards[0, 0, 0, 0] == 1.0
        with pytest.raises(ValueError):
            env.rewards[0, 0, 0, 0] = 5.0


class TestMomdpProperties:
    """Tests for the derived tables."""

    def test_shapes(self, four_state_env: Momdp) -> None:
        assert four_state_env.state_count == 4
        assert four_state_env.action_count == 2
        assert four_state_env.objective_count == 2
        assert four_state_env.expected_rewards.shape == (4, 2, 2)
        assert four_state_env.continuation_matrix.shape == (4, 2, 4)

    def test_continuation_excludes_terminal_outcomes(self, dst_env: Momdp) -> None:
        """Test that a step into a treasure leaves no continuation mass."""
        down_from_start = dst_env.continuation_matrix[0, 1]

        assert down_from_start.sum() == 0.0

    def test_continuation_rows_sum_to_non_terminal_mass(
        self, four_state_env: Momdp
    ) -> None:
        expected = (four_state_env.probs * ~four_state_env.terminals).sum(axis=2)

        np.testing.assert_allclose(
            four_state_env.continuation_matrix.sum(axis=2), expected
        )

    def test_is_deterministic(self, dst_env: Momdp) -> None:
        assert dst_env.is_deterministic
        assert not two_outcome_env().is_deterministic

    def test_max_reward_norm(self, single_state_env: Momdp) -> None:
        assert single_state_env.max_reward_norm == 1.0


class TestRandomStreams:
    """Tests for seeded generators."""

    def test_same_seed_same_draws(self) -> None:
        np.testing.assert_array_equal(
            make_rng(5).random(4), make_rng(5).random(4)
        )

    def test_split_streams_differ_and_are_reproducible(self) -> None:
        first = [g.random(3) for g in split_rng(make_rng(5), 3)]
        again = [g.random(3) for g in split_rng(make_rng(5), 3)]

        for a, b in zip(first, again, strict=True):
            np.testing.assert_array_equal(a, b)
        assert not np.array_equal(first[0], first[1])


class TestStep:
    """Tests for step()."""

    def test_deterministic_step_consumes_no_randomness(
        self, single_state_env: Momdp
    ) -> None:
        """
        Given a point-mass transition
        When step is called
        Then the generator state is unchanged
        """
        rng = make_rng(0)
        before = rng.bit_generator.state

        t = step(single_state_env, 0, 1, rng)

        assert rng.bit_generator.state == before
        np.testing.assert_array_equal(t.reward, [0.0, 1.0])
        assert (t.state, t.action, t.next_state, t.terminal) == (0, 1, 0, False)

    def test_stochastic_step_frequencies(self) -> None:
        """Test that outcome frequencies match p(. | s, a)."""
        env = two_outcome_env(0.25)
        rng = make_rng(3)
        draws = 20_000

        first = sum(step(env, 0, 0, rng).reward[0] == 1.0 for _ in range(draws))

        assert abs(first / draws - 0.25) < 0.015

    def test_draw_past_rounded_total_skips_zero_slots(
        self, mocker: MockerFixture
    ) -> None:
        """
        Given outcome probabilities that sum to just under one, padded with a
        trailing zero-probability outcome
        When the uniform draw lands above the last cumulative sum
        Then the last outcome with positive probability is returned
        """
        env = Momdp(
            probs=[[[0.5, 0.5 - 1e-10, 0.0]]],
            next_states=[[[0, 0, 0]]],
            rewards=[[[[1.0, 0.0], [0.0, 1.0], [9.0, 9.0]]]],
            terminals=[[[False, False, True]]],
            initial=[1.0],
            gamma=0.9,
        )
        rng = mocker.Mock(spec=np.random.Generator)
        rng.random.return_value = 1.0 - 1e-12

        t = step(env, 0, 0, rng)

        np.testing.assert_array_equal(t.reward, [0.0, 1.0])
        assert not t.terminal

    def test_zero_probability_outcome_never_drawn(self) -> None:
        env = Momdp(
            probs=[[[0.0, 0.5, 0.0, 0.5, 0.0]]],
            next_states=[[[0, 0, 0, 0, 0]]],
            rewards=[[[[9.0, 9.0], [1.0, 0.0], [9.0, 9.0], [0.0, 1.0], [9.0, 9.0]]]],
            terminals=[[[True, False, True, False, True]]],
            initial=[1.0],
            gamma=0.9,
        )
        rng = make_rng(5)

        draws = [step(env, 0, 0, rng) for _ in range(2_000)]

        assert not any(t.terminal for t in draws)

    def test_returned_reward_is_a_copy(self, single_state_env: Momdp) -> None:
        t = step(single_state_env, 0, 0, make_rng(0))
        t.reward[0] = 42.0

        assert single_state_env.rewards[0, 0, 0, 0] == 1.0

    @pytest.mark.parametrize(("s", "a"), [(1, 0), (0, 2), (-1, 0)])
    def test_out_of_range(self, single_state_env: Momdp, s: int, a: int) -> None:
        with pytest.raises(IndexError):
            step(single_state_env, s, a, make_rng(0))


class TestResetAndRollout:
    """Tests for reset() and rollout()."""

    def test_reset_point_mass(self, dst_env: Momdp) -> None:
        rng = make_rng(0)
        before = rng.bit_generator.state

        assert reset(dst_env, rng) == 0
        assert rng.bit_generator.state == before

    def test_reset_follows_initial_distribution(self, four_state_env: Momdp) -> None:
        rng = make_rng(1)
        draws = 8_000

        counts = np.bincount(
            [reset(four_state_env, rng) for _ in range(draws)], minlength=4
        )

        np.testing.assert_allclose(counts / draws, four_state_env.initial, atol=0.03)

    def test_reset_never_returns_zero_mass_state(self, mocker: MockerFixture) -> None:
        env = Momdp(
            probs=[[[1.0]], [[1.0]], [[1.0]]],
            next_states=[[[0]], [[1]], [[2]]],
            rewards=[[[[0.0, 0.0]]], [[[0.0, 0.0]]], [[[0.0, 0.0]]]],
            terminals=[[[False]], [[False]], [[False]]],
            initial=[0.5, 0.5 - 1e-10, 0.0],
            gamma=0.9,
        )
        rng = mocker.Mock(spec=np.random.Generator)
        rng.random.return_value = 1.0 - 1e-12

        assert reset(env, rng) == 1

    def test_rollout_discounts_rewards(self, single_state_env: Momdp) -> None:
        """Test that three steps at gamma = 0.5 sum to 1 + 0.5 + 0.25."""
        total = rollout(single_state_env, lambda s: 0, make_rng(0), horizon=3)

        np.testing.assert_allclose(total, [1.75, 0.0])

    def test_rollout_stops_at_terminal(self, dst_env: Momdp) -> None:
        """Test that diving straight into the first treasure ends the episode."""
        total = rollout(dst_env, lambda s: 1, make_rng(0), horizon=50)

        np.testing.assert_allclose(total, [0.7, -1.0])

    def test_rollout_needs_a_horizon(self, single_state_env: Momdp) -> None:
        with pytest.raises(ValueError, match="horizon"):
            rollout(single_state_env, lambda s: 0, make_rng(0))
