"""
Expected utility, maximum utility loss, and the per-iteration metric trace.
"""

# system imports
from collections.abc import Iterator, Sequence
from dataclasses import astuple, dataclass, field

# 3rd party imports
import numpy as np

# project imports
from gpi_morl.config import GeometryConfig
from gpi_morl.geometry import as_value_set, corner_weights

# Column order of trace CSV files; never reorder
TRACE_COLUMNS = (
    "iteration",
    "env_steps",
    "eu_grid",
    "mul_grid",
    "mul_corner",
    "library_size",
    "eu_gpi",
    "mul_gpi",
)


###############################################################################
#
def _best_utilities(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """max_i V_i . w for every weight row."""
    return np.max(weights @ values.T, axis=1)


###############################################################################
#
def _as_weights(weights: Sequence[Sequence[float]] | np.ndarray, m: int) -> np.ndarray:
    grid = np.asarray(weights, dtype=float)
    if grid.size == 0:
        raise ValueError("The weight list is empty")
    if grid.ndim != 2 or grid.shape[1] != m:
        raise ValueError(
            f"Dimension mismatch: weights have shape {grid.shape}, values have {m} objectives"
        )
    return grid


###############################################################################
#
def expected_utility(
    vectors: Sequence[Sequence[float]] | np.ndarray,
    weights: Sequence[Sequence[float]] | np.ndarray,
) -> float:
    """
    Mean over the weights of the best available utility.

    Raises:
        ValueError: If either input is empty or the dimensions differ
    """
    values = as_value_set(vectors)
    grid = _as_weights(weights, values.shape[1])
    return float(np.mean(_best_utilities(values, grid)))


###############################################################################
#
def maximum_utility_loss(
    vectors: Sequence[Sequence[float]] | np.ndarray,
    reference: Sequence[Sequence[float]] | np.ndarray,
    weights: Sequence[Sequence[float]] | np.ndarray,
) -> float:
    """
    Worst-case utility gap to a reference set, clamped at 0.

    Raises:
        ValueError: If the dimensions of the inputs differ
    """
    values = as_value_set(vectors)
    ref = as_value_set(reference)
    if values.shape[1] != ref.shape[1]:
        raise ValueError(
            f"Dimension mismatch: {values.shape[1]} vs {ref.shape[1]} objectives"
        )
    grid = _as_weights(weights, values.shape[1])
    loss = _best_utilities(ref, grid) - _best_utilities(values, grid)
    return max(0.0, float(np.max(loss)))


###############################################################################
#
def gpi_utility_metrics(
    gpi_values: Sequence[float] | np.ndarray,
    reference: Sequence[Sequence[float]] | np.ndarray,
    weights: Sequence[Sequence[float]] | np.ndarray,
) -> tuple[float, float]:
    """
    Expected utility and maximum utility loss of the GPI policy.

    The GPI policy of a library can beat every library member, so these are
    computed from its own scalarized value at each weight, not from the
    library's value vectors.

    Args:
        gpi_values: v^GPI_w for every row of weights
        reference: Reference CCS
        weights: The weights the GPI values were computed at

    Returns:
        (eu, mul), with the loss clamped at 0

    Raises:
        ValueError: If the shapes do not line up
    """
    ref = as_value_set(reference)
    grid = _as_weights(weights, ref.shape[1])
    values = np.asarray(gpi_values, dtype=float)
    if values.shape != (grid.shape[0],):
        raise ValueError(
            f"Expected one GPI value per weight ({grid.shape[0]}), got shape {values.shape}"
        )
    loss = _best_utilities(ref, grid) - values
    return float(np.mean(values)), max(0.0, float(np.max(loss)))


###############################################################################
#
def corner_augmented_weights(
    vectors: Sequence[Sequence[float]] | np.ndarray,
    reference: Sequence[Sequence[float]] | np.ndarray,
    grid: np.ndarray,
    cfg: GeometryConfig | None = None,
) -> np.ndarray:
    """
    An evaluation grid extended with the corner weights of the reference set
    and of V.

    The utility loss is linear between consecutive kinks of either upper
    surface, so its maximum over the simplex is attained at one of them.
    """
    return np.vstack(
        [
            grid,
            corner_weights(reference, cfg),
            corner_weights(as_value_set(vectors), cfg),
        ]
    )


# =============================================================================
# Metric Trace
# =============================================================================


###############################################################################
###############################################################################
#
@dataclass(frozen=True)
class MetricRecord:
    """One row of a metric trace."""

    iteration: int
    env_steps: int
    eu_grid: float
    mul_grid: float
    mul_corner: float
    library_size: int
    eu_gpi: float = float("nan")
    mul_gpi: float = float("nan")

    ###########################################################################
    #
    def as_row(self) -> tuple[int | float, ...]:
        return astuple(self)


###############################################################################
###############################################################################
#
@dataclass
class MetricTrace:
    """Append-only sequence of records with strictly increasing env_steps."""

    records: list[MetricRecord] = field(default_factory=list)

    ###########################################################################
    #
    def append(self, record: MetricRecord) -> None:
        if self.records and record.env_steps <= self.records[-1].env_steps:
            raise ValueError(
                f"env_steps must increase: {record.env_steps} after "
                f"{self.records[-1].env_steps}"
            )
        self.records.append(record)

    ###########################################################################
    #
    def __iter__(self) -> Iterator[MetricRecord]:
        return iter(self.records)

    ###########################################################################
    #
    def __len__(self) -> int:
        return len(self.records)

    ###########################################################################
    #
    def column(self, name: str) -> np.ndarray:
        """All values of one TRACE_COLUMNS column."""
        if name not in TRACE_COLUMNS:
            raise ValueError(f"Unknown trace column: {name!r}")
        return np.array([getattr(r, name) for r in self.records])


###############################################################################
#
def measure(
    vectors: np.ndarray,
    reference: np.ndarray,
    grid: np.ndarray,
    iteration: int,
    env_steps: int,
    cfg: GeometryConfig | None = None,
    gpi_values: np.ndarray | None = None,
) -> MetricRecord:
    """
    Compute every trace metric of a value set against a reference CCS.

    gpi_values holds v^GPI_w for each grid row; without it eu_gpi and
    mul_gpi are NaN.
    """
    corners = corner_augmented_weights(vectors, reference, grid, cfg)
    eu_gpi, mul_gpi = (
        (float("nan"), float("nan"))
        if gpi_values is None
        else gpi_utility_metrics(gpi_values, reference, grid)
    )
    return MetricRecord(
        iteration=iteration,
        env_steps=env_steps,
        eu_grid=expected_utility(vectors, grid),
        mul_grid=maximum_utility_loss(vectors, reference, grid),
        mul_corner=maximum_utility_loss(vectors, reference, corners),
        library_size=len(vectors),
        eu_gpi=eu_gpi,
        mul_gpi=mul_gpi,
    )
