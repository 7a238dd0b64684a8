from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .constants import ColumnKind
from .errors import DataError


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    n×d observation matrix.

    Continuous columns hold reals; categorical columns hold level codes 1..L_j
    (stored as floats in `values`, exact integers). Missing values are rejected.
    """

    values: np.ndarray
    column_kinds: tuple[ColumnKind, ...]
    n_levels: tuple[int | None, ...]
    column_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise DataError(f"data must be a 2-d matrix, got {values.ndim}-d")
        n, d = values.shape
        if n < 1 or d < 1:
            raise DataError(f"data must have n >= 1 and d >= 1, got {n}×{d}")
        if np.isnan(values).any():
            raise DataError("missing values are not supported")
        if not np.isfinite(values).all():
            raise DataError("data contains infinite values")
        kinds = tuple(ColumnKind(k) for k in self.column_kinds)
        if len(kinds) != d or len(self.n_levels) != d:
            raise DataError(f"column type tags ({len(kinds)}) do not match d={d}")
        for j, (kind, levels) in enumerate(zip(kinds, self.n_levels)):
            if kind is ColumnKind.CONTINUOUS:
                continue
            col = values[:, j]
            if levels is None or levels < 1:
                raise DataError(f"categorical column {j} needs a level count L_j >= 1")
            if not np.all(col == np.round(col)) or col.min() < 1 or col.max() > levels:
                raise DataError(f"categorical column {j} must hold integer codes in 1..{levels}")
        names = tuple(self.column_names) or tuple(f"X{j + 1}" for j in range(d))
        if len(names) != d:
            raise DataError(f"{len(names)} column names for {d} columns")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "column_kinds", kinds)
        object.__setattr__(self, "n_levels", tuple(None if k is ColumnKind.CONTINUOUS else int(l) for k, l in zip(kinds, self.n_levels)))
        object.__setattr__(self, "column_names", names)

    @classmethod
    def continuous(cls, values: np.ndarray, column_names: Sequence[str] = ()) -> "Dataset":
        values = np.asarray(values, dtype=float)
        d = values.shape[1] if values.ndim == 2 else 0
        return cls(values, (ColumnKind.CONTINUOUS,) * d, (None,) * d, tuple(column_names))

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def d(self) -> int:
        return int(self.values.shape[1])

    def is_continuous(self, j: int) -> bool:
        return self.column_kinds[j] is ColumnKind.CONTINUOUS


@dataclass(frozen=True)
class ModelStructure:
    """
    m = (B, G, ω). `omega[j]` is the 0-based block of variable j.

    Construction does not require every block to be used: the modified EM may
    produce empty blocks, see `structure.validate_structure` for membership in
    the competing set.
    """

    B: int
    G: tuple[int, ...]
    omega: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "G", tuple(int(g) for g in self.G))
        object.__setattr__(self, "omega", tuple(int(b) for b in self.omega))
        if self.B < 1:
            raise DataError(f"B must be >= 1, got {self.B}")
        if len(self.G) != self.B:
            raise DataError(f"G has {len(self.G)} entries for B={self.B}")
        if any(g < 1 for g in self.G):
            raise DataError(f"component counts must be >= 1, got {self.G}")
        if any(b < 0 or b >= self.B for b in self.omega):
            raise DataError(f"omega entries must lie in 0..{self.B - 1}")

    @property
    def d(self) -> int:
        return len(self.omega)

    def block_variables(self, b: int) -> tuple[int, ...]:
        """Ω_b in increasing variable order."""
        return tuple(j for j, w in enumerate(self.omega) if w == b)

    @property
    def block_sizes(self) -> tuple[int, ...]:
        return tuple(len(self.block_variables(b)) for b in range(self.B))


@dataclass(frozen=True, eq=False)
class VariableBins:
    """
    Discretization of one variable.

    Continuous: `boundaries` holds R_j + 1 strictly increasing edges and
    `measures` the bin lengths |I_Rjr|. Categorical: no boundaries, R_j = L_j
    levels of unit measure.
    """

    kind: ColumnKind
    n_levels: int
    measures: np.ndarray
    boundaries: np.ndarray | None = None

    def __post_init__(self) -> None:
        measures = np.array(self.measures, dtype=float)
        if measures.shape != (self.n_levels,) or np.any(measures <= 0):
            raise DataError("bin measures must be positive, one per level")
        object.__setattr__(self, "measures", _frozen(measures))
        if self.boundaries is not None:
            edges = np.array(self.boundaries, dtype=float)
            if edges.shape != (self.n_levels + 1,) or np.any(np.diff(edges) <= 0):
                raise DataError("bin boundaries must be strictly increasing, R_j + 1 of them")
            object.__setattr__(self, "boundaries", _frozen(edges))


@dataclass(frozen=True, eq=False)
class BinningScheme:
    variables: tuple[VariableBins, ...]

    @property
    def n_levels(self) -> tuple[int, ...]:
        return tuple(v.n_levels for v in self.variables)

    @property
    def d(self) -> int:
        return len(self.variables)


@dataclass(frozen=True, eq=False)
class DiscretizedData:
    """n×d 0-based level codes plus the scheme that produced them."""

    codes: np.ndarray
    scheme: BinningScheme

    def __post_init__(self) -> None:
        codes = np.array(self.codes, dtype=np.intp)
        if codes.ndim != 2 or codes.shape[1] != self.scheme.d:
            raise DataError("level codes do not match the binning scheme")
        object.__setattr__(self, "codes", _frozen(codes))

    @property
    def n(self) -> int:
        return int(self.codes.shape[0])

    @property
    def d(self) -> int:
        return int(self.codes.shape[1])

    @property
    def n_levels(self) -> tuple[int, ...]:
        return self.scheme.n_levels

    @property
    def levels(self) -> np.ndarray:
        """1-based level numbers as written on disk."""
        return self.codes + 1

    @cached_property
    def indicators(self) -> tuple[np.ndarray, ...]:
        """Per variable, the n×R_j one-hot matrix of σ_Rjr(x_ij)."""
        return tuple(
            _frozen(np.eye(r)[self.codes[:, j]]) for j, r in enumerate(self.n_levels)
        )

    @cached_property
    def log_measures(self) -> tuple[np.ndarray, ...]:
        """Per variable, ln |I_Rjr(i,j)| for every observation."""
        return tuple(
            _frozen(np.log(v.measures)[self.codes[:, j]]) for j, v in enumerate(self.scheme.variables)
        )


@dataclass(frozen=True, eq=False)
class DiscreteParameters:
    """
    θ_R = (π, α).

    `pi[b]` has length G_b. `alpha[j]` is the G_{ω_j}×R_j table of variable j
    for the block it belongs to, so the tables are only meaningful together
    with the structure's ω.
    """

    pi: tuple[np.ndarray, ...]
    alpha: tuple[np.ndarray, ...]
    epsilon: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "pi", tuple(_frozen(np.array(p, dtype=float)) for p in self.pi))
        object.__setattr__(self, "alpha", tuple(_frozen(np.array(a, dtype=float)) for a in self.alpha))


@dataclass(frozen=True, eq=False)
class Responsibilities:
    """t[b] is the n×G_b matrix of posterior membership probabilities."""

    t: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "t", tuple(_frozen(np.array(x, dtype=float)) for x in self.t))


@dataclass(frozen=True, eq=False)
class PartitionSet:
    """labels[b] holds one 0-based cluster label per observation."""

    labels: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", tuple(_frozen(np.array(x, dtype=np.intp)) for x in self.labels))

    @property
    def B(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class CandidateSummary:
    B: int
    G: tuple[int, ...]
    best_penalized_loglik: float
    best_restart: int
    selected_structure: ModelStructure
    admissible: bool


@dataclass(frozen=True, eq=False)
class FitResult:
    structure: ModelStructure
    params: DiscreteParameters
    penalized_loglik: float
    loglik: float
    penalty: float
    responsibilities: Responsibilities
    map_partitions: PartitionSet
    n_iterations: int
    converged: bool
    n_levels: tuple[int, ...]
    n_obs: int
    # penalized objective after each iteration
    trace: tuple[float, ...] = ()
    candidates: tuple[CandidateSummary, ...] = field(default_factory=tuple)
