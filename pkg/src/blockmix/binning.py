"""
Quantile discretization of continuous variables.

Each continuous column is cut at its empirical quantiles (type-7 linear
interpolation) into R equal-count bins whose outer edges are the observed
extremes, widened slightly so that every observation falls strictly inside.
Tied quantiles collapse into one boundary and a bin left without
observations (a quantile at the minimum, heavy ties) merges into its
neighbour, so a variable may end up with fewer bins than requested, never
fewer than two. Categorical columns are left as they are: L_j levels of
unit measure.

Bins are half-open, [b_{r-1}, b_r), the last one closed. Values outside the
fitted support (held-out data) clamp to the extreme bins.
"""

from __future__ import annotations

import logging
import math
from typing import Sequence

import numpy as np

from .constants import BOUNDARY_WIDENING, MIN_BINS, ColumnKind
from .errors import DataError
from .models import BinningScheme, Dataset, DiscretizedData, VariableBins

logger = logging.getLogger(__name__)


def choose_num_bins(n: int, k: int) -> int:
    """R = max(2, floor(n^(1/k))), computed without floating-point drift."""
    if n < 2 or k < 1:
        raise DataError(f"need n >= 2 and k >= 1, got n={n}, k={k}")
    r = int(math.floor(n ** (1.0 / k)))
    while (r + 1) ** k <= n:
        r += 1
    while r > 1 and r**k > n:
        r -= 1
    return max(MIN_BINS, r)


def _drop_empty_bins(col: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Merges every bin without observations into its lower neighbour (the first into the next)."""
    while len(edges) > 2:
        counts = np.bincount(np.searchsorted(edges[1:-1], col, side="right"), minlength=len(edges) - 1)
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0:
            break
        edges = np.delete(edges, max(int(empty[0]), 1))
    return edges


def build_bins(column: np.ndarray, R: int) -> VariableBins:
    if R < MIN_BINS:
        raise DataError(f"R must be >= {MIN_BINS}, got {R}")
    col = np.asarray(column, dtype=float)
    lo, hi = float(col.min()), float(col.max())
    span = hi - lo
    if span <= 0:
        raise DataError("constant column: no valid binning")

    interior = np.quantile(col, np.arange(1, R) / R, method="linear")
    interior = np.unique(interior)
    pad = BOUNDARY_WIDENING * span
    edges = _drop_empty_bins(col, np.concatenate(([lo - pad], interior, [hi + pad])))
    if len(edges) < 3:
        edges = np.array([lo - pad, col[col > lo].min(), hi + pad])
    if len(edges) - 1 < R:
        logger.debug("tied or empty quantile bins: %d bins instead of %d", len(edges) - 1, R)
    return VariableBins(
        kind=ColumnKind.CONTINUOUS,
        n_levels=len(edges) - 1,
        measures=np.diff(edges),
        boundaries=edges,
    )


def categorical_bins(n_levels: int) -> VariableBins:
    return VariableBins(kind=ColumnKind.CATEGORICAL, n_levels=n_levels, measures=np.ones(n_levels))


def build_scheme(data: Dataset, R: int | Sequence[int]) -> BinningScheme:
    """Bins every continuous column with its R (common or per variable)."""
    per_var = [int(R)] * data.d if np.isscalar(R) else [int(r) for r in R]
    if len(per_var) != data.d:
        raise DataError(f"{len(per_var)} bin counts for d={data.d}")
    out: list[VariableBins] = []
    for j in range(data.d):
        if data.is_continuous(j):
            try:
                out.append(build_bins(data.values[:, j], per_var[j]))
            except DataError as e:
                raise DataError(f"column {data.column_names[j]!r}: {e}") from e
        else:
            out.append(categorical_bins(int(data.n_levels[j])))
    return BinningScheme(tuple(out))


def discretize(data: Dataset, scheme: BinningScheme) -> DiscretizedData:
    if scheme.d != data.d:
        raise DataError(f"scheme has {scheme.d} variables, data has {data.d} columns")
    codes = np.empty((data.n, data.d), dtype=np.intp)
    for j, var in enumerate(scheme.variables):
        col = data.values[:, j]
        if var.kind is not data.column_kinds[j]:
            raise DataError(f"column {j} is {data.column_kinds[j].value}, scheme says {var.kind.value}")
        if var.kind is ColumnKind.CONTINUOUS:
            # side="right" on the interior edges gives [b_{r-1}, b_r); out-of-range clamps.
            codes[:, j] = np.searchsorted(var.boundaries[1:-1], col, side="right")
        else:
            if col.max() > var.n_levels:
                raise DataError(f"column {j} has level {int(col.max())} beyond L_j={var.n_levels}")
            codes[:, j] = col.astype(np.intp) - 1
    return DiscretizedData(codes=codes, scheme=scheme)
