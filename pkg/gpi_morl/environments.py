"""
Concrete MOMDPs: Deep Sea Treasure grids and small synthetic instances.
"""

# system imports
import pathlib
import re
from dataclasses import dataclass, field

# 3rd party imports
import numpy as np

# project imports
from gpi_morl.config import logger
from gpi_morl.momdp import Momdp, make_rng

# =============================================================================
# Constants
# =============================================================================

MAPS_DIR = pathlib.Path(__file__).parent.parent / "resources" / "maps"
DEFAULT_DST_MAP = MAPS_DIR / "deep-sea-treasure.txt"

# Action index -> (row delta, col delta)
ACTIONS = ((-1, 0), (1, 0), (0, -1), (0, 1))
ACTION_NAMES = ("up", "down", "left", "right")

BLANK, BLOCKED, START = ".", "#", "S"
MAP_SECTIONS = ("grid", "legend", "settings")
MAP_SETTINGS = ("time_penalty", "horizon")


###############################################################################
###############################################################################
#
class MapFormatError(ValueError):
    """A map file failed to parse; the message carries file:line."""


# =============================================================================
# Deep Sea Treasure
# =============================================================================


###############################################################################
###############################################################################
#
@dataclass(frozen=True)
class DstMap:
    """A Deep Sea Treasure grid."""

    rows: int
    cols: int
    treasure_cells: tuple[tuple[int, int, float], ...]
    blocked_cells: tuple[tuple[int, int], ...]
    start_cell: tuple[int, int]
    time_penalty: float = -1.0
    horizon: int | None = None

    ###########################################################################
    #
    def __post_init__(self) -> None:
        if self.rows <= 0 or self.cols <= 0:
            raise ValueError(f"Map must be non-empty, got {self.rows}x{self.cols}")

        blocked = set(self.blocked_cells)
        for r, c in blocked:
            self._check_bounds(r, c, "blocked cell")

        seen: set[tuple[int, int]] = set()
        for r, c, value in self.treasure_cells:
            self._check_bounds(r, c, "treasure")
            if (r, c) in seen:
                raise ValueError(f"Treasure cell ({r}, {c}) listed twice")
            if (r, c) in blocked:
                raise ValueError(f"Treasure cell ({r}, {c}) is blocked")
            if not np.isfinite(value):
                raise ValueError(f"Treasure value at ({r}, {c}) is not finite")
            seen.add((r, c))

        self._check_bounds(*self.start_cell, "start cell")
        if self.start_cell in seen:
            raise ValueError(f"Start cell {self.start_cell} is a treasure")
        if self.start_cell in blocked:
            raise ValueError(f"Start cell {self.start_cell} is blocked")
        if self.horizon is not None and self.horizon <= 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")

    ###########################################################################
    #
    def _check_bounds(self, r: int, c: int, what: str) -> None:
        if not (0 <= r < self.rows and 0 <= c < self.cols):
            raise ValueError(
                f"{what} ({r}, {c}) outside the {self.rows}x{self.cols} grid"
            )

    ###########################################################################
    #
    @property
    def state_count(self) -> int:
        return self.rows * self.cols

    ###########################################################################
    #
    def state_of(self, row: int, col: int) -> int:
        """Encode an in-bounds cell as a state index (row-major)."""
        self._check_bounds(row, col, "cell")
        return row * self.cols + col

    ###########################################################################
    #
    def cell_of(self, state: int) -> tuple[int, int]:
        """Decode a state index back to its (row, col) cell."""
        if not 0 <= state < self.state_count:
            raise IndexError(f"State {state} out of range [0, {self.state_count})")
        return divmod(state, self.cols)


###############################################################################
#
def build_dst(
    dst_map: DstMap, gamma: float = 0.99, horizon: int | None = None
) -> Momdp:
    """
    Build the deterministic two-objective MOMDP for a DST grid.

    Args:
        dst_map: The grid
        gamma: Discount factor
        horizon: Episode step cap; falls back to the map's own setting

    Returns:
        Momdp with reward (treasure value or 0, time_penalty) on every step

    Note:
        Moves off the grid or into blocked cells leave the state unchanged.
        Entering a treasure cell ends the episode. Blocked and treasure cells
        are still states (self-loops) so the encoder covers the whole grid.
    """
    states = dst_map.state_count
    actions = len(ACTIONS)
    blocked = set(dst_map.blocked_cells)
    treasures = {(r, c): value for r, c, value in dst_map.treasure_cells}

    next_states = np.zeros((states, actions, 1), dtype=np.int64)
    rewards = np.zeros((states, actions, 1, 2))
    terminals = np.zeros((states, actions, 1), dtype=bool)
    rewards[..., 1] = dst_map.time_penalty

    for s in range(states):
        r, c = dst_map.cell_of(s)
        for a, (dr, dc) in enumerate(ACTIONS):
            if (r, c) in blocked or (r, c) in treasures:
                next_states[s, a, 0] = s
                continue
            nr, nc = r + dr, c + dc
            inside = 0 <= nr < dst_map.rows and 0 <= nc < dst_map.cols
            if not inside or (nr, nc) in blocked:
                next_states[s, a, 0] = s
                continue
            next_states[s, a, 0] = dst_map.state_of(nr, nc)
            if (nr, nc) in treasures:
                rewards[s, a, 0, 0] = treasures[(nr, nc)]
                terminals[s, a, 0] = True

    initial = np.zeros(states)
    initial[dst_map.state_of(*dst_map.start_cell)] = 1.0

    return Momdp(
        probs=np.ones((states, actions, 1)),
        next_states=next_states,
        rewards=rewards,
        terminals=terminals,
        initial=initial,
        gamma=gamma,
        horizon=horizon if horizon is not None else dst_map.horizon,
        name="deep-sea-treasure",
    )


# =============================================================================
# Map Files
# =============================================================================


###############################################################################
#
def parse_dst_map(text: str, source: str = "<map>") -> DstMap:
    """
    Parse the plain-text map grammar (resources/guides/dst-map-format.md).

    Args:
        text: Map file contents
        source: Name used in error messages

    Returns:
        The parsed DstMap

    Raises:
        MapFormatError: With a "source:line: reason" message
    """

    def fail(lineno: int, reason: str) -> MapFormatError:
        return MapFormatError(f"{source}:{lineno}: {reason}")

    section: str | None = None
    grid: list[tuple[int, str]] = []
    legend: dict[str, tuple[int, float]] = {}
    settings: dict[str, tuple[int, str]] = {}

    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith(";"):
            continue

        header = re.fullmatch(r"\[(\w+)\]", line)
        if header:
            section = header.group(1)
            if section not in MAP_SECTIONS:
                raise fail(lineno, f"unknown section [{section}]")
            continue

        match section:
            case "grid":
                grid.append((lineno, line))
            case "legend":
                parts = line.split()
                if len(parts) != 2 or not re.fullmatch(r"[a-z]", parts[0]):
                    raise fail(lineno, "legend lines look like 'a 0.7'")
                letter, raw_value = parts
                if letter in legend:
                    raise fail(lineno, f"legend letter '{letter}' defined twice")
                try:
                    value = float(raw_value)
                except ValueError:
                    raise fail(
                        lineno, f"treasure value {raw_value!r} is not a number"
                    ) from None
                if not np.isfinite(value):
                    raise fail(lineno, f"treasure value {raw_value!r} is not finite")
                legend[letter] = (lineno, value)
            case "settings":
                if "=" not in line:
                    raise fail(lineno, "settings lines look like 'key = value'")
                key, value = (part.strip() for part in line.split("=", 1))
                if key not in MAP_SETTINGS:
                    raise fail(lineno, f"unknown setting '{key}'")
                if key in settings:
                    raise fail(lineno, f"setting '{key}' given twice")
                settings[key] = (lineno, value)
            case _:
                raise fail(lineno, "content before the first section header")

    if not grid:
        raise fail(0, "missing [grid] section")

    cols = len(grid[0][1])
    start: tuple[int, int] | None = None
    blocked: list[tuple[int, int]] = []
    letters: dict[str, tuple[int, int, int]] = {}
    for r, (lineno, row_text) in enumerate(grid):
        if len(row_text) != cols:
            raise fail(
                lineno, f"row has {len(row_text)} cells, expected {cols}"
            )
        for c, char in enumerate(row_text):
            if char == BLANK:
                continue
            if char == BLOCKED:
                blocked.append((r, c))
            elif char == START:
                if start is not None:
                    raise fail(lineno, "duplicate start cell 'S'")
                start = (r, c)
            elif char in legend:
                if char in letters:
                    raise fail(lineno, f"treasure '{char}' placed twice")
                letters[char] = (r, c, lineno)
            elif re.fullmatch(r"[a-z]", char):
                raise fail(lineno, f"treasure '{char}' missing from [legend]")
            else:
                raise fail(lineno, f"unknown cell character {char!r}")

    if start is None:
        raise fail(grid[0][0], "grid has no start cell 'S'")
    for letter, (lineno, _) in legend.items():
        if letter not in letters:
            raise fail(lineno, f"legend letter '{letter}' not used in the grid")

    time_penalty = -1.0
    horizon: int | None = None
    if "time_penalty" in settings:
        lineno, raw = settings["time_penalty"]
        try:
            time_penalty = float(raw)
        except ValueError:
            raise fail(lineno, f"time_penalty {raw!r} is not a number") from None
    if "horizon" in settings:
        lineno, raw = settings["horizon"]
        if not raw.isdigit() or int(raw) <= 0:
            raise fail(lineno, f"horizon {raw!r} is not a positive integer")
        horizon = int(raw)

    treasures = tuple(
        (r, c, legend[letter][1])
        for letter, (r, c, _) in sorted(letters.items(), key=lambda kv: kv[1][:2])
    )
    return DstMap(
        rows=len(grid),
        cols=cols,
        treasure_cells=treasures,
        blocked_cells=tuple(blocked),
        start_cell=start,
        time_penalty=time_penalty,
        horizon=horizon,
    )


###############################################################################
#
def load_dst_map(path: pathlib.Path) -> DstMap:
    """
    Read a map file from disk.

    Raises:
        MapFormatError: If the file cannot be read or parsed
    """
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise MapFormatError(f"{path}:0: cannot read map file: {exc}") from exc
    dst_map = parse_dst_map(text, str(path))
    logger.debug(
        "Loaded %dx%d map with %d treasures from %s",
        dst_map.rows,
        dst_map.cols,
        len(dst_map.treasure_cells),
        path,
    )
    return dst_map


###############################################################################
#
def default_dst_map() -> DstMap:
    """The shipped canonical Deep Sea Treasure layout."""
    return load_dst_map(DEFAULT_DST_MAP)


# =============================================================================
# Synthetic MOMDPs
# =============================================================================


###############################################################################
###############################################################################
#
@dataclass(frozen=True, eq=False)
class SyntheticMomdpSpec:
    """Explicit outcome tables for a hand-built or random MOMDP."""

    name: str
    probs: np.ndarray
    next_states: np.ndarray
    rewards: np.ndarray
    terminals: np.ndarray
    initial: np.ndarray
    gamma: float
    horizon: int | None = field(default=None)


###############################################################################
#
def build_synthetic(spec: SyntheticMomdpSpec) -> Momdp:
    """
    Build the MOMDP a spec declares.

    Raises:
        ValueError: If the tables are inconsistent (Momdp validation)
    """
    return Momdp(
        probs=spec.probs,
        next_states=spec.next_states,
        rewards=spec.rewards,
        terminals=spec.terminals,
        initial=spec.initial,
        gamma=spec.gamma,
        horizon=spec.horizon,
        name=spec.name,
    )


###############################################################################
#
def deterministic_spec(
    name: str,
    next_states: list[list[int]],
    rewards: list[list[tuple[float, ...]]],
    gamma: float,
    terminals: list[list[bool]] | None = None,
    start: int = 0,
) -> SyntheticMomdpSpec:
    """
    Shorthand for a deterministic MOMDP given as per-(s, a) lists.

    Args:
        name: Label
        next_states: next_states[s][a]
        rewards: rewards[s][a] as a tuple of m values
        gamma: Discount factor
        terminals: terminals[s][a], all False when omitted
        start: Start state (mu is a point mass)
    """
    next_arr = np.asarray(next_states, dtype=np.int64)
    states = next_arr.shape[0]
    actions = next_arr.shape[1] if next_arr.ndim == 2 else 0
    initial = np.zeros(states)
    initial[start] = 1.0
    term_arr = (
        np.zeros((states, actions), dtype=bool)
        if terminals is None
        else np.asarray(terminals, dtype=bool)
    )
    reward_arr = np.asarray(rewards, dtype=float)
    return SyntheticMomdpSpec(
        name=name,
        probs=np.ones((states, actions, 1)),
        next_states=next_arr.reshape(states, actions, 1),
        rewards=reward_arr.reshape(states, actions, 1, -1),
        terminals=term_arr.reshape(states, actions, 1),
        initial=initial,
        gamma=gamma,
    )


###############################################################################
#
def single_state_spec(gamma: float = 0.5) -> SyntheticMomdpSpec:
    """One state, two actions rewarding (1, 0) and (0, 1) forever."""
    return deterministic_spec(
        "single-state",
        next_states=[[0, 0]],
        rewards=[[(1.0, 0.0), (0.0, 1.0)]],
        gamma=gamma,
    )


###############################################################################
#
def interleaved_spec() -> SyntheticMomdpSpec:
    """
    Two alternating states where mixing the extreme policies pays off.

    Always taking action 0 is worth (2, 0) and always taking action 1 is worth
    (0, 2). Taking action 0 in state 0 and action 1 in state 1 is worth
    (28/15, 26/15), so the GPI policy of the two extremes improves on both at
    w = (0.5, 0.5).
    """
    return deterministic_spec(
        "interleaved",
        next_states=[[1, 1], [0, 0]],
        rewards=[
            [(1.4, 0.0), (0.0, 0.2)],
            [(0.2, 0.0), (0.0, 2.6)],
        ],
        gamma=0.5,
    )


###############################################################################
#
def random_synthetic_spec(
    rng: np.random.Generator,
    states: int,
    actions: int,
    objectives: int,
    gamma: float = 0.9,
    outcomes: int = 2,
    terminal_probability: float = 0.1,
    name: str = "random",
) -> SyntheticMomdpSpec:
    """
    Draw a valid random MOMDP.

    Args:
        rng: Random stream
        states: Number of states
        actions: Number of actions
        objectives: Reward dimension m
        gamma: Discount factor
        outcomes: Outcome slots K per (s, a)
        terminal_probability: Chance that an outcome slot is terminal
        name: Label

    Returns:
        A spec with Dirichlet outcome probabilities and uniform [0, 1) rewards
    """
    probs = rng.dirichlet(np.ones(outcomes), size=(states, actions))
    # Dirichlet rows are normalized only up to rounding
    probs /= probs.sum(axis=2, keepdims=True)
    return SyntheticMomdpSpec(
        name=name,
        probs=probs,
        next_states=rng.integers(0, states, size=(states, actions, outcomes)),
        rewards=rng.uniform(0.0, 1.0, size=(states, actions, outcomes, objectives)),
        terminals=rng.random((states, actions, outcomes)) < terminal_probability,
        initial=rng.dirichlet(np.ones(states)),
        gamma=gamma,
    )


###############################################################################
#
def four_state_spec() -> SyntheticMomdpSpec:
    """The fixed stochastic 4-state, 2-action, 2-objective instance."""
    return random_synthetic_spec(
        make_rng(7), states=4, actions=2, objectives=2, gamma=0.9,
        name="four-state",
    )


###############################################################################
#
def synthetic_fixture(name: str) -> SyntheticMomdpSpec:
    """
    Look up a named synthetic MOMDP.

    Args:
        name: ``single-state``, ``interleaved``, ``four-state`` or
            ``random-<seed>-<states>-<m>``

    Raises:
        ValueError: If the name is unknown
    """
    match name:
        case "single-state":
            return single_state_spec()
        case "interleaved":
            return interleaved_spec()
        case "four-state":
            return four_state_spec()
    random_name = re.fullmatch(r"random-(\d+)-(\d+)-(\d+)", name)
    if random_name:
        seed, states, objectives = (int(g) for g in random_name.groups())
        if states < 1 or objectives < 2:
            raise ValueError(f"Invalid random fixture: {name!r}")
        return random_synthetic_spec(
            make_rng(seed), states=states, actions=2, objectives=objectives,
            name=name,
        )
    raise ValueError(f"Unknown synthetic MOMDP: {name!r}")
