"""Tests for the GPI Linear Support loop."""

import numpy as np
import pytest
from pytest_mock import MockerFixture

from gpi_morl.dynamic_programming import ConvergenceError
from gpi_morl.environments import build_synthetic, synthetic_fixture
from gpi_morl.geometry import equidistant_weights
from gpi_morl.gpi import PolicyLibrary
from gpi_morl.linear_support import (
    GpiLsState,
    PolicyProposal,
    evaluate_gpi_value,
    gpi_values_on_grid,
    prune_library,
    run_gpi_ls,
    select_weight,
    select_weights,
)
from gpi_morl.momdp import Momdp, make_rng
from gpi_morl.oracle import OracleSolver, exact_ccs


def extremes_state(env: Momdp) -> GpiLsState:
    """Loop state whose library holds the exact optimal policies for e1 and e2."""
    state = GpiLsState(library=PolicyLibrary.for_env(env))
    solver = OracleSolver(env)
    for w in ([1.0, 0.0], [0.0, 1.0]):
        proposal = solver(np.array(w), state.library)
        state.library.add(proposal.q_table, w, proposal.value)
    return state


def exact_value_fn(env: Momdp, state: GpiLsState):
    return lambda w: evaluate_gpi_value(env, state.library, w)


class TestGpiLsState:
    """Tests for the weight support bookkeeping."""

    def test_mark_finished_deduplicates(self, e1: np.ndarray) -> None:
        state = GpiLsState(library=PolicyLibrary(1, 2, 2, gamma=0.5))

        state.mark_finished(e1)
        state.mark_finished(e1 + 1e-12)

        assert len(state.finished_weights) == 1
        assert state.is_finished(np.array([1.0, 1e-10]))
        assert not state.is_finished(np.array([0.9, 0.1]))


class TestEvaluateGpiValue:
    """Tests for evaluate_gpi_value()."""

    def test_exact(self, interleaved_env: Momdp) -> None:
        state = extremes_state(interleaved_env)

        value = evaluate_gpi_value(interleaved_env, state.library, np.array([0.5, 0.5]))

        assert value == pytest.approx(1.8)

    def test_rollout_agrees_on_deterministic_env(self, interleaved_env: Momdp) -> None:
        state = extremes_state(interleaved_env)

        value = evaluate_gpi_value(
            interleaved_env,
            state.library,
            np.array([0.5, 0.5]),
            method="rollout",
            rng=make_rng(0),
            rollouts=3,
            horizon=60,
        )

        assert value == pytest.approx(1.8, abs=1e-9)

    def test_values_on_grid(self, interleaved_env: Momdp) -> None:
        """
        Given the optimal e1 and e2 policies of the interleaved MOMDP
        When GPI values are computed on a three-weight grid
        Then they match evaluate_gpi_value and beat the library at (0.5, 0.5)
        """
        state = extremes_state(interleaved_env)
        grid = np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]])

        values = gpi_values_on_grid(interleaved_env, state.library, grid)

        assert values[1] == pytest.approx(1.8)
        for w, value in zip(grid, values, strict=True):
            assert value == evaluate_gpi_value(interleaved_env, state.library, w)
        assert values[1] > np.max(state.library.values @ grid[1])

    def test_rollout_needs_rng(self, interleaved_env: Momdp) -> None:
        state = extremes_state(interleaved_env)

        with pytest.raises(ValueError, match="random stream"):
            evaluate_gpi_value(
                interleaved_env, state.library, np.array([0.5, 0.5]), method="rollout"
            )


class TestSelectWeight:
    """Tests for select_weight() and select_weights()."""

    def test_picks_largest_gpi_improvement(self, interleaved_env: Momdp) -> None:
        """
        Given exact policies for both extremes of the interleaved MOMDP
        When the next corner weight is selected
        Then it is (0.5, 0.5), where GPI improves on the library by 0.8
        """
        state = extremes_state(interleaved_env)

        w = select_weight(state, None, exact_value_fn(interleaved_env, state))

        np.testing.assert_allclose(w, [0.5, 0.5])

    def test_top_k_orders_by_improvement(self, interleaved_env: Momdp) -> None:
        state = extremes_state(interleaved_env)

        chosen = select_weights(
            state, None, exact_value_fn(interleaved_env, state), k=3
        )

        assert len(chosen) == 3
        np.testing.assert_allclose(chosen[0], [0.5, 0.5])

    def test_finished_weights_are_skipped(
        self, interleaved_env: Momdp, e1: np.ndarray, e2: np.ndarray
    ) -> None:
        state = extremes_state(interleaved_env)
        state.mark_finished(e1)
        state.mark_finished(e2)

        chosen = select_weights(
            state, None, exact_value_fn(interleaved_env, state), k=3
        )

        assert len(chosen) == 1
        np.testing.assert_allclose(chosen[0], [0.5, 0.5])

    def test_none_when_every_corner_is_finished(
        self, interleaved_env: Momdp, e1: np.ndarray, e2: np.ndarray
    ) -> None:
        state = extremes_state(interleaved_env)
        for w in (e1, e2, np.array([0.5, 0.5])):
            state.mark_finished(w)

        assert select_weight(state, None, exact_value_fn(interleaved_env, state)) is None


class TestPruneLibrary:
    """Tests for prune_library()."""

    def test_drops_dominated_policies(self) -> None:
        state = GpiLsState(library=PolicyLibrary(1, 2, 2, gamma=0.5))
        for value in ([1.0, 0.0], [0.4, 0.4], [0.0, 1.0]):
            state.library.add(np.zeros((1, 2, 2)), value, value)

        prune_library(state, None)

        np.testing.assert_array_equal(state.library.values, [[1.0, 0.0], [0.0, 1.0]])


class TestRunGpiLs:
    """Tests for the run_gpi_ls() outer loop."""

    def test_first_weight_is_e1(self, mocker: MockerFixture, interleaved_env: Momdp) -> None:
        solver = mocker.Mock(side_effect=OracleSolver(interleaved_env))

        run_gpi_ls(interleaved_env, solver)

        first_weight = solver.call_args_list[0].args[0]
        np.testing.assert_array_equal(first_weight, [1.0, 0.0])

    def test_finds_the_mixed_policy(self, interleaved_env: Momdp) -> None:
        state = run_gpi_ls(interleaved_env, OracleSolver(interleaved_env))

        values = state.library.values
        assert len(values) == 3
        assert any(np.allclose(v, [28 / 15, 26 / 15]) for v in values)

    def test_iteration_cap(self, interleaved_env: Momdp) -> None:
        with pytest.raises(ConvergenceError, match="after 1 iterations"):
            run_gpi_ls(interleaved_env, OracleSolver(interleaved_env), max_iterations=1)

    def test_unfinished_proposals_never_close_a_corner(
        self, single_state_env: Momdp
    ) -> None:
        """
        Given a solver that never reports its policy as done
        When GPI-LS runs
        Then corners stay open and the iteration cap is hit
        """
        oracle = OracleSolver(single_state_env)

        def never_done(w: np.ndarray, library: PolicyLibrary) -> PolicyProposal:
            return oracle(w, library)._replace(done=False)

        with pytest.raises(ConvergenceError):
            run_gpi_ls(single_state_env, never_done, max_iterations=5)

    def test_trace_records_each_iteration(self, interleaved_env: Momdp) -> None:
        """
        Given a reference CCS and an evaluation grid
        When GPI-LS runs with the exact oracle
        Then one record per iteration is kept, counted in iterations, and the
        corner MUL falls from 2 to 0
        """
        reference = exact_ccs(interleaved_env)
        grid = equidistant_weights(101, 2)

        state = run_gpi_ls(
            interleaved_env,
            OracleSolver(interleaved_env),
            reference=reference,
            grid=grid,
        )

        trace = state.trace
        assert len(trace) == state.iteration + 1
        np.testing.assert_array_equal(trace.column("env_steps"), trace.column("iteration"))
        assert trace.records[0].mul_corner == pytest.approx(2.0)
        assert trace.records[-1].mul_corner <= 1e-12
        assert trace.records[-1].library_size == 3

    def test_trace_scores_the_gpi_policy(self, interleaved_env: Momdp) -> None:
        """
        Given exact oracle policies, whose GPI policy is never worse than
        the best of them
        When GPI-LS records a trace
        Then every GPI column is at least as good as its library column, and
        strictly better once GPI can combine two policies
        """
        state = run_gpi_ls(
            interleaved_env,
            OracleSolver(interleaved_env),
            reference=exact_ccs(interleaved_env),
            grid=equidistant_weights(101, 2),
        )

        for record in state.trace:
            assert record.eu_gpi >= record.eu_grid - 1e-9
            assert record.mul_gpi <= record.mul_grid + 1e-9
        assert any(r.eu_gpi > r.eu_grid + 1e-6 for r in state.trace)
        assert state.trace.records[-1].mul_gpi <= 1e-9

    def test_no_trace_without_reference(self, single_state_env: Momdp) -> None:
        state = run_gpi_ls(single_state_env, OracleSolver(single_state_env))

        assert len(state.trace) == 0

    def test_custom_gpi_value_estimator(
        self, mocker: MockerFixture, single_state_env: Momdp
    ) -> None:
        estimator = mocker.Mock(return_value=0.0)

        run_gpi_ls(single_state_env, OracleSolver(single_state_env), gpi_value_fn=estimator)

        assert estimator.call_count > 0

    @pytest.mark.parametrize("name", ["four-state", "random-3-4-2", "random-5-3-3"])
    def test_exact_oracle_trace_is_monotone(self, name: str) -> None:
        """
        Given the exact oracle on a synthetic MOMDP
        When GPI-LS records a trace
        Then MUL never rises and EU never falls between iterations
        """
        env = build_synthetic(synthetic_fixture(name))
        reference = exact_ccs(env)
        grid = equidistant_weights(101, env.objective_count)

        state = run_gpi_ls(env, OracleSolver(env), reference=reference, grid=grid)

        for column in ("mul_grid", "mul_corner"):
            assert np.all(np.diff(state.trace.column(column)) <= 1e-9)
        assert np.all(np.diff(state.trace.column("eu_grid")) >= -1e-9)
        assert state.trace.records[-1].mul_corner <= 1e-6
