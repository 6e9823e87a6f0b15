"""
Pytest fixtures and factories for testing the MORL toolkit.
"""

from collections.abc import Callable, Mapping
from pathlib import Path

import numpy as np
import pytest
from pytest_mock import MockerFixture

from gpi_morl.config import Settings, global_state
from gpi_morl.environments import (
    build_dst,
    build_synthetic,
    default_dst_map,
    deterministic_spec,
    four_state_spec,
    interleaved_spec,
    single_state_spec,
)
from gpi_morl.metrics import MetricRecord, MetricTrace
from gpi_morl.momdp import Momdp

# =============================================================================
# Sample Data Factories
# =============================================================================


def make_dst_map_text(
    grid: list[str],
    legend: Mapping[str, float] | None = None,
    settings: Mapping[str, str] | None = None,
    comment: str = "",
) -> str:
    """
    Factory to create map file text.

    Args:
        grid: Grid rows (e.g., ["S.", "a."])
        legend: Treasure letter -> value
        settings: Raw [settings] entries
        comment: Optional leading comment line (without ';')

    Returns:
        Map file contents
    """
    lines: list[str] = []
    if comment:
        lines.append(f"; {comment}")
    lines.append("[grid]")
    lines.extend(grid)
    if legend:
        lines.append("")
        lines.append("[legend]")
        lines.extend(f"{letter} {value}" for letter, value in legend.items())
    if settings:
        lines.append("")
        lines.append("[settings]")
        lines.extend(f"{key} = {value}" for key, value in settings.items())
    return "\n".join(lines) + "\n"


def make_config_text(entries: Mapping[str, object], comment: str = "") -> str:
    """
    Factory to create experiment config text.

    Args:
        entries: Dotted key -> value (e.g., {"learner.dyna_steps": 0})
        comment: Optional leading comment

    Returns:
        Config file contents
    """
    lines: list[str] = [f"# {comment}"] if comment else []
    lines.extend(f"{key} = {value}" for key, value in entries.items())
    return "\n".join(lines) + "\n"


def make_trace(
    steps: list[int],
    mul_corner: list[float],
    steps_per_iteration: int = 1,
) -> MetricTrace:
    """
    Factory to create a metric trace with the given steps and corner MUL.

    eu_grid and eu_gpi are 1 - mul_corner, mul_grid and mul_gpi equal
    mul_corner and the library holds two policies throughout.
    """
    trace = MetricTrace()
    for env_steps, loss in zip(steps, mul_corner, strict=True):
        trace.append(
            MetricRecord(
                iteration=env_steps // steps_per_iteration,
                env_steps=env_steps,
                eu_grid=1.0 - loss,
                mul_grid=loss,
                mul_corner=loss,
                library_size=2,
                eu_gpi=1.0 - loss,
                mul_gpi=loss,
            )
        )
    return trace


def make_chain_env(rewards: list[tuple[float, float]], gamma: float = 0.5) -> Momdp:
    """
    Factory to create a one-action chain that terminates after the last reward.

    State i moves to i + 1 with rewards[i]; the last step is terminal.
    """
    count = len(rewards)
    next_states = [[min(i + 1, count - 1)] for i in range(count)]
    terminals = [[i == count - 1] for i in range(count)]
    return build_synthetic(
        deterministic_spec(
            "chain",
            next_states=next_states,
            rewards=[[r] for r in rewards],
            gamma=gamma,
            terminals=terminals,
        )
    )


# =============================================================================
# Fixtures
# =============================================================================


@pytest.fixture
def settings_factory(mocker: MockerFixture) -> Callable[[Settings], None]:
    """
    Factory fixture that returns a callable to install custom Settings.

    Usage:
        def test_something(settings_factory):
            settings_factory(Settings(workers=1))
            # Now global_state.settings is set for this test

    Returns:
        Callable that accepts a Settings object and patches global_state.settings
    """

    def _configure(settings: Settings) -> None:
        """Set the global_state.settings for this test."""
        mocker.patch.object(global_state, "settings", settings)

    return _configure


@pytest.fixture
def config_file(tmp_path: Path) -> Callable[..., Path]:
    """
    Factory fixture that writes an experiment config into tmp_path.

    Usage:
        path = config_file({"algorithm": "oracle"}, name="exp.conf")
    """

    def _write(entries: Mapping[str, object], name: str = "experiment.conf") -> Path:
        path = tmp_path / name
        path.write_text(make_config_text(entries))
        return path

    return _write


@pytest.fixture
def single_state_env() -> Momdp:
    """One state, two actions worth (2, 0) and (0, 2) at gamma = 0.5."""
    return build_synthetic(single_state_spec())


@pytest.fixture
def interleaved_env() -> Momdp:
    """Two states whose mixed policy beats both extremes at w = (0.5, 0.5)."""
    return build_synthetic(interleaved_spec())


@pytest.fixture
def four_state_env() -> Momdp:
    """The fixed stochastic four-state instance."""
    return build_synthetic(four_state_spec())


@pytest.fixture(scope="session")
def dst_env() -> Momdp:
    """The canonical Deep Sea Treasure at gamma = 0.99."""
    return build_dst(default_dst_map(), gamma=0.99)


@pytest.fixture
def e1() -> np.ndarray:
    return np.array([1.0, 0.0])


@pytest.fixture
def e2() -> np.ndarray:
    return np.array([0.0, 1.0])
