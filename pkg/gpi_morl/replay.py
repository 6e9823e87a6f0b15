"""
Sum tree and the prioritized transition buffer used for Dyna planning.

Sampling follows P(i) = max(|d_i|^alpha, kappa) / sum_j max(|d_j|^alpha, kappa).
"""

# system imports
from typing import NamedTuple

# 3rd party imports
import numpy as np

# project imports
from gpi_morl.config import BufferConfig
from gpi_morl.momdp import Transition

# Redraws allowed when a float-rounded descent lands on an empty leaf
MAX_REDRAWS = 64


###############################################################################
###############################################################################
#
class SumTree:
    """
    Array-backed binary tree whose internal nodes hold the sum of their
    children. Leaf i lives at node i + capacity - 1; the root holds the total.
    """

    ###########################################################################
    #
    def __init__(self, capacity: int) -> None:
        if capacity <= 0:
            raise ValueError(f"SumTree capacity must be positive, got {capacity}")
        self.capacity = capacity
        self.nodes = np.zeros(2 * capacity - 1)

    ###########################################################################
    #
    @property
    def total(self) -> float:
        return float(self.nodes[0])

    ###########################################################################
    #
    def leaf(self, index: int) -> float:
        return float(self.nodes[index + self.capacity - 1])

    ###########################################################################
    #
    def update(self, index: int, mass: float) -> None:
        """Set a leaf's mass and recompute its ancestors from their children."""
        if not 0 <= index < self.capacity:
            raise IndexError(f"Leaf {index} out of range [0, {self.capacity})")
        node = index + self.capacity - 1
        self.nodes[node] = mass
        while node > 0:
            node = (node - 1) // 2
            self.nodes[node] = self.nodes[2 * node + 1] + self.nodes[2 * node + 2]

    ###########################################################################
    #
    def rebuild(self, masses: np.ndarray) -> None:
        """Replace every leaf at once; leaves past len(masses) become empty."""
        masses = np.asarray(masses, dtype=float)
        if masses.shape[0] > self.capacity:
            raise ValueError(
                f"{masses.shape[0]} masses do not fit a tree of capacity {self.capacity}"
            )
        internal = self.capacity - 1
        self.nodes[internal:] = 0.0
        self.nodes[internal : internal + masses.shape[0]] = masses
        # Level d of the heap spans nodes [2^d - 1, 2^(d+1) - 1)
        starts = []
        start = 0
        while start < internal:
            starts.append(start)
            start = 2 * start + 1
        for start in reversed(starts):
            node = np.arange(start, min(2 * start + 1, internal))
            self.nodes[node] = self.nodes[2 * node + 1] + self.nodes[2 * node + 2]

    ###########################################################################
    #
    def find(self, cumulative: np.ndarray) -> np.ndarray:
        """
        Locate the leaves holding the given prefix sums.

        Args:
            cumulative: Values in [0, total)

        Returns:
            Leaf indices, same shape as the input
        """
        remaining = np.array(cumulative, dtype=float, copy=True)
        node = np.zeros(remaining.shape, dtype=np.int64)
        internal = self.capacity - 1
        active = node < internal
        while np.any(active):
            left = 2 * node[active] + 1
            left_mass = self.nodes[left]
            go_left = remaining[active] < left_mass
            remaining[active] = np.where(
                go_left, remaining[active], remaining[active] - left_mass
            )
            node[active] = np.where(go_left, left, left + 1)
            active = node < internal
        return node - internal

    ###########################################################################
    #
    def find_one(self, cumulative: float) -> int:
        """Scalar version of find for single draws."""
        nodes = self.nodes
        internal = self.capacity - 1
        node = 0
        while node < internal:
            left = 2 * node + 1
            left_mass = float(nodes[left])
            if cumulative < left_mass:
                node = left
            else:
                cumulative -= left_mass
                node = left + 1
        return node - internal


###############################################################################
###############################################################################
#
class TransitionBatch(NamedTuple):
    """Live buffer entries as parallel arrays, ordered by slot."""

    handles: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray


###############################################################################
###############################################################################
#
class PrioritizedBuffer:
    """
    FIFO transition store with proportional (or uniform) sampling.

    Entries are addressed by handles that grow monotonically; once FIFO
    eviction overwrites a slot, the old handle is stale. Raw priorities |d_i|
    are the stored state; the tree caches max(|d_i|^alpha, kappa) and is
    rebuilt from them whenever alpha, kappa or the priorities change wholesale.
    """

    ###########################################################################
    #
    def __init__(self, cfg: BufferConfig | None = None) -> None:
        self.cfg = cfg or BufferConfig()
        capacity = self.cfg.capacity
        self.tree = SumTree(capacity)
        self._transitions: list[Transition | None] = [None] * capacity
        self._raw = np.zeros(capacity)
        self._handles = np.full(capacity, -1, dtype=np.int64)
        self._states = np.zeros(capacity, dtype=np.int64)
        self._actions = np.zeros(capacity, dtype=np.int64)
        self._next_states = np.zeros(capacity, dtype=np.int64)
        self._terminals = np.zeros(capacity, dtype=bool)
        self._rewards: np.ndarray | None = None
        self._next_handle = 0

    ###########################################################################
    #
    def __len__(self) -> int:
        return min(self._next_handle, self.cfg.capacity)

    ###########################################################################
    #
    def _masses(self, raw_priorities: np.ndarray) -> np.ndarray:
        raw = np.asarray(raw_priorities, dtype=float)
        if self.cfg.sampling == "uniform":
            return np.ones_like(raw)
        return np.maximum(raw**self.cfg.alpha_per, self.cfg.kappa)

    ###########################################################################
    #
    def _mass(self, raw_priority: float) -> float:
        return float(self._masses(np.array([raw_priority]))[0])

    ###########################################################################
    #
    @staticmethod
    def _check_priority(raw_priority: float) -> float:
        value = float(raw_priority)
        if not np.isfinite(value) or value < 0:
            raise ValueError(f"Priority must be finite and >= 0, got {raw_priority!r}")
        return value

    ###########################################################################
    #
    def _slot(self, handle: int) -> int:
        slot = handle % self.cfg.capacity
        if handle < 0 or self._handles[slot] != handle:
            raise KeyError(f"Buffer handle {handle} is stale or unknown")
        return slot

    ###########################################################################
    #
    def _rebuild_tree(self) -> None:
        self.tree.rebuild(self._masses(self._raw[: len(self)]))

    ###########################################################################
    #
    def push(self, t: Transition, raw_priority: float) -> int:
        """
        Store a transition, evicting the oldest one when full.

        Returns:
            The entry's handle
        """
        value = self._check_priority(raw_priority)
        if self._rewards is None:
            self._rewards = np.zeros((self.cfg.capacity, len(t.reward)))
        handle = self._next_handle
        slot = handle % self.cfg.capacity
        self._transitions[slot] = t
        self._raw[slot] = value
        self._handles[slot] = handle
        self._states[slot] = t.state
        self._actions[slot] = t.action
        self._rewards[slot] = t.reward
        self._next_states[slot] = t.next_state
        self._terminals[slot] = t.terminal
        self.tree.update(slot, self._mass(value))
        self._next_handle += 1
        return handle

    ###########################################################################
    #
    def update_priority(self, handle: int, raw_priority: float) -> None:
        """
        Replace a live entry's priority.

        Raises:
            KeyError: If the handle was evicted or never issued
        """
        slot = self._slot(handle)
        value = self._check_priority(raw_priority)
        self._raw[slot] = value
        self.tree.update(slot, self._mass(value))

    ###########################################################################
    #
    def priority_of(self, handle: int) -> float:
        """The raw |delta| stored for a live entry."""
        return float(self._raw[self._slot(handle)])

    ###########################################################################
    #
    def live_batch(self) -> TransitionBatch:
        """Every live entry, in slot order (the order reprioritize expects)."""
        live = len(self)
        m = 0 if self._rewards is None else self._rewards.shape[1]
        rewards = np.zeros((0, m)) if self._rewards is None else self._rewards[:live]
        return TransitionBatch(
            handles=self._handles[:live].copy(),
            states=self._states[:live].copy(),
            actions=self._actions[:live].copy(),
            rewards=rewards.copy(),
            next_states=self._next_states[:live].copy(),
            terminals=self._terminals[:live].copy(),
        )

    ###########################################################################
    #
    def reprioritize(self, raw_priorities: np.ndarray) -> None:
        """
        Replace the raw priority of every live entry and rebuild the tree.

        Args:
            raw_priorities: One |delta| per live entry, in slot order

        Raises:
            ValueError: On a length mismatch or a negative or non-finite value
        """
        raw = np.asarray(raw_priorities, dtype=float)
        if raw.shape != (len(self),):
            raise ValueError(
                f"Expected {len(self)} priorities, got array of shape {raw.shape}"
            )
        if not np.all(np.isfinite(raw)) or np.any(raw < 0):
            raise ValueError("Priorities must be finite and >= 0")
        self._raw[: len(self)] = raw
        self._rebuild_tree()

    ###########################################################################
    #
    def reweight(
        self, alpha_per: float | None = None, kappa: float | None = None
    ) -> None:
        """
        Change the priority exponent or floor; the stored raw priorities stay.

        Raises:
            pydantic.ValidationError: If a value is out of range
        """
        updates = {
            key: value
            for key, value in (("alpha_per", alpha_per), ("kappa", kappa))
            if value is not None
        }
        self.cfg = BufferConfig.model_validate({**self.cfg.model_dump(), **updates})
        self._rebuild_tree()

    ###########################################################################
    #
    def sample_batch(
        self, rng: np.random.Generator, n: int
    ) -> tuple[np.ndarray, list[Transition]]:
        """
        Draw n entries independently with probability P(i).

        Returns:
            (handles, transitions)

        Raises:
            ValueError: If the buffer is empty
        """
        if len(self) == 0:
            raise ValueError("Cannot sample from an empty buffer")
        live = len(self)
        slots = self.tree.find(rng.random(n) * self.tree.total)
        for _ in range(MAX_REDRAWS):
            bad = (slots >= live) | (self.tree.nodes[slots + self.cfg.capacity - 1] <= 0)
            if not np.any(bad):
                break
            slots[bad] = self.tree.find(rng.random(int(bad.sum())) * self.tree.total)
        else:
            raise RuntimeError("Sum tree sampling kept landing on empty leaves")
        transitions = [self._transitions[slot] for slot in slots]
        return self._handles[slots].copy(), transitions  # type: ignore[return-value]

    ###########################################################################
    #
    def sample(self, rng: np.random.Generator) -> tuple[int, Transition]:
        """
        Draw one entry with probability P(i).

        Returns:
            (handle, transition)
        """
        if len(self) == 0:
            raise ValueError("Cannot sample from an empty buffer")
        live = len(self)
        for _ in range(MAX_REDRAWS):
            slot = self.tree.find_one(rng.random() * self.tree.total)
            if slot < live and self.tree.leaf(slot) > 0:
                return int(self._handles[slot]), self._transitions[slot]  # type: ignore[return-value]
        raise RuntimeError("Sum tree sampling kept landing on empty leaves")

    ###########################################################################
    #
    def probabilities(self) -> tuple[np.ndarray, np.ndarray]:
        """
        The exact sampling distribution over live entries.

        Returns:
            (handles, probabilities), ordered by slot
        """
        live = len(self)
        masses = self._masses(self._raw[:live])
        return self._handles[:live].copy(), masses / masses.sum()
