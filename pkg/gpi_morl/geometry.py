"""
Exact geometry over finite sets of value vectors.

Corner weights are the weight coordinates of the vertices of

    P = {(w, u) : V w - u <= 0,  w >= 0,  sum(w) = 1}

i.e. the kinks of the upper surface max_i V_i . w over the simplex, plus the
simplex extrema. They are found by solving every square system made of the
normalization row and m active inequality constraints and keeping the
feasible solutions.
"""

# system imports
import itertools
from collections.abc import Sequence
from math import comb

# 3rd party imports
import numpy as np

# project imports
from gpi_morl.config import GeometryConfig, logger

# Square systems with a worse condition number are treated as singular
SINGULAR_CONDITION = 1e12


###############################################################################
#
def as_value_set(vectors: Sequence[Sequence[float]] | np.ndarray) -> np.ndarray:
    """Coerce a collection of value vectors into an (n, m) float array."""
    values = np.asarray(vectors, dtype=float)
    if values.ndim != 2 or values.shape[0] == 0:
        raise ValueError(f"Expected a non-empty (n, m) value set, got {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("Value vectors must be finite")
    return values


###############################################################################
#
def _dedup_weights(weights: np.ndarray, tolerance: float) -> np.ndarray:
    """Sort rows lexicographically and drop rows within tolerance of a kept one."""
    if weights.shape[0] == 0:
        return weights
    order = np.lexsort(weights.T[::-1])
    kept: list[np.ndarray] = []
    for w in weights[order]:
        if not any(np.max(np.abs(w - k)) <= tolerance for k in kept):
            kept.append(w)
    return np.array(kept)


###############################################################################
#
def corner_weights(
    vectors: Sequence[Sequence[float]] | np.ndarray,
    cfg: GeometryConfig | None = None,
) -> np.ndarray:
    """
    Enumerate the corner weights of a value set.

    Args:
        vectors: The value set, shape (n, m)
        cfg: Feasibility and deduplication tolerances

    Returns:
        Corner weights, shape (k, m), sorted lexicographically

    Raises:
        ValueError: If the set is empty or m < 2
    """
    cfg = cfg or GeometryConfig()
    values = as_value_set(vectors)
    n, m = values.shape
    if m < 2:
        raise ValueError(f"Corner weights need m >= 2 objectives, got {m}")

    # Inequality rows over x = (w, u): value rows V_i.w - u and facets -w_j
    inequalities = np.zeros((n + m, m + 1))
    inequalities[:n, :m] = values
    inequalities[:n, m] = -1.0
    inequalities[n:, :m] = -np.eye(m)
    normalization = np.zeros(m + 1)
    normalization[:m] = 1.0

    subsets = np.array(list(itertools.combinations(range(n + m), m)))
    systems = np.empty((len(subsets), m + 1, m + 1))
    systems[:, :m, :] = inequalities[subsets]
    systems[:, m, :] = normalization
    rhs = np.zeros((len(subsets), m + 1))
    rhs[:, m] = 1.0

    with np.errstate(all="ignore"):
        conditions = np.linalg.cond(systems)
    regular = np.isfinite(conditions) & (conditions < SINGULAR_CONDITION)
    if not np.any(regular):
        return np.zeros((0, m))

    solutions = np.linalg.solve(systems[regular], rhs[regular][..., None])[..., 0]
    w, u = solutions[:, :m], solutions[:, m]
    tol = cfg.feasibility_tolerance
    feasible = np.all(w >= -tol, axis=1) & np.all(
        values @ w.T - u[None, :] <= tol, axis=0
    )

    w = np.clip(w[feasible], 0.0, None)
    w /= w.sum(axis=1, keepdims=True)
    corners = _dedup_weights(w, cfg.dedup_tolerance)
    logger.debug("%d corner weights for %d value vectors", len(corners), n)
    return corners


###############################################################################
#
def max_scalarized(
    vectors: Sequence[Sequence[float]] | np.ndarray,
    w: Sequence[float] | np.ndarray,
) -> tuple[float, int]:
    """
    Best utility in a value set under one weight.

    Returns:
        (max_i V_i . w, smallest index attaining it)
    """
    values = as_value_set(vectors)
    weight = np.asarray(w, dtype=float)
    if weight.shape != (values.shape[1],):
        raise ValueError(
            f"Dimension mismatch: values have {values.shape[1]} objectives, "
            f"weight has shape {weight.shape}"
        )
    scores = values @ weight
    index = int(np.argmax(scores))
    return float(scores[index]), index


###############################################################################
#
def nondominated_indices(
    vectors: Sequence[Sequence[float]] | np.ndarray,
    cfg: GeometryConfig | None = None,
) -> list[int]:
    """
    Indices of the vectors that survive linear-dominance pruning.

    A vector is kept when it is at least as good as every other vector, within
    the feasibility tolerance, at some simplex weight, so vectors tied on a
    facet are all kept. Near-duplicates are kept once (first occurrence). The
    margin v.w - max_other v'.w is linear on each cell of the others' upper
    surface, so its maximum over the simplex is attained at one of the
    others' corner weights.

    Args:
        vectors: The value set, shape (n, m)
        cfg: Tolerances

    Returns:
        Kept indices in ascending order
    """
    cfg = cfg or GeometryConfig()
    values = as_value_set(vectors)

    distinct: list[int] = []
    for i, v in enumerate(values):
        if not any(
            np.max(np.abs(v - values[j])) <= cfg.dedup_tolerance for j in distinct
        ):
            distinct.append(i)
    if len(distinct) == 1:
        return distinct

    kept: list[int] = []
    for i in distinct:
        others = values[[j for j in distinct if j != i]]
        corners = corner_weights(others, cfg)
        margins = corners @ values[i] - np.max(corners @ others.T, axis=1)
        if margins.max() >= -cfg.feasibility_tolerance:
            kept.append(i)
        else:
            logger.debug("Pruned dominated value vector %s", values[i])
    return kept


###############################################################################
#
def remove_dominated(
    vectors: Sequence[Sequence[float]] | np.ndarray,
    cfg: GeometryConfig | None = None,
) -> np.ndarray:
    """Drop every vector that is never optimal; see nondominated_indices."""
    values = as_value_set(vectors)
    return values[nondominated_indices(values, cfg)]


# =============================================================================
# Weight Grids
# =============================================================================


###############################################################################
#
def simplex_lattice(h: int, m: int) -> np.ndarray:
    """
    Das-Dennis lattice: every weight with entries in {0, 1/h, ..., 1}.

    Returns:
        C(h + m - 1, m - 1) weights, shape (k, m), sorted lexicographically
    """
    if h < 1 or m < 2:
        raise ValueError(f"Lattice needs h >= 1 and m >= 2, got h={h}, m={m}")
    points = []
    # Stars and bars: bar positions split h units into m parts
    for bars in itertools.combinations(range(h + m - 1), m - 1):
        edges = (-1, *bars, h + m - 1)
        points.append([edges[k + 1] - edges[k] - 1 for k in range(m)])
    lattice = np.array(points, dtype=float) / h
    return lattice[np.lexsort(lattice.T[::-1])]


###############################################################################
#
def equidistant_weights(n: int, m: int) -> np.ndarray:
    """
    Evenly spread weights over the simplex.

    Args:
        n: Requested count
        m: Number of objectives

    Returns:
        For m = 2, exactly n weights (w1 ascending from 0 to 1). For m >= 3,
        the simplex lattice whose size is closest to n; its size may differ.

    Raises:
        ValueError: If n < m
    """
    if m < 2:
        raise ValueError(f"Weights need m >= 2 objectives, got {m}")
    if n < m:
        raise ValueError(f"Need at least m={m} weights, got n={n}")
    if m == 2:
        w1 = np.linspace(0.0, 1.0, n)
        return np.column_stack([w1, 1.0 - w1])

    best_h, best_gap = 1, abs(m - n)
    h = 1
    while comb(h + m - 1, m - 1) <= n:
        h += 1
        gap = abs(comb(h + m - 1, m - 1) - n)
        if gap < best_gap:
            best_h, best_gap = h, gap
    return simplex_lattice(best_h, m)
