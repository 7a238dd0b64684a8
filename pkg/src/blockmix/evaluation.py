from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.metrics import adjusted_rand_score

from .errors import DataError
from .models import FitResult, ModelStructure, PartitionSet
from .simulation import LabeledSample

# Exhaustive block matching up to this many blocks, greedy beyond.
_EXHAUSTIVE_MATCH_LIMIT = 5


@dataclass(frozen=True)
class EvaluationReport:
    block_ari: float
    per_block_ari: tuple[float, ...]       # one per true block
    mean_individual_ari: float
    structure_match: bool
    matching: tuple[int | None, ...]       # fitted block scored against each true block


def ari(p: Sequence[int], q: Sequence[int]) -> float:
    """
    Hubert–Arabie adjusted Rand index. Two single-cluster partitions score 1;
    label values themselves are irrelevant.
    """
    p, q = np.asarray(p), np.asarray(q)
    if p.shape != q.shape or p.ndim != 1:
        raise DataError(f"partitions must be 1-d and of equal length, got {p.shape} and {q.shape}")
    if p.size < 2:
        raise DataError("ARI needs at least two items")
    return float(adjusted_rand_score(p, q))


def block_ari(omega_hat: Sequence[int], omega_true: Sequence[int]) -> float:
    """ARI between two variable-to-block assignments seen as partitions of the variables."""
    return ari(omega_hat, omega_true)


def _overlap(fitted: ModelStructure, true_omega: Sequence[int], B_true: int) -> np.ndarray:
    out = np.zeros((B_true, fitted.B), dtype=int)
    for b_true, b_fit in zip(true_omega, fitted.omega):
        out[b_true, b_fit] += 1
    return out


def _match_blocks(overlap: np.ndarray) -> list[int | None]:
    """
    Injective true→fitted block matching maximizing total variable overlap.
    Exhaustive for small B (first best permutation in lexicographic order),
    greedy otherwise. Unmatched true blocks reuse their best-overlapping fitted
    block; with no fitted block at all they stay unmatched.
    """
    B_true, B_fit = overlap.shape
    if B_fit == 0:
        return [None] * B_true
    k = min(B_true, B_fit)
    matching: list[int | None] = [None] * B_true
    if max(B_true, B_fit) <= _EXHAUSTIVE_MATCH_LIMIT:
        best, best_score = None, -1
        for rows in itertools.permutations(range(B_true), k):
            for cols in itertools.permutations(range(B_fit), k):
                score = sum(overlap[r, c] for r, c in zip(rows, cols))
                if score > best_score:
                    best, best_score = (rows, cols), score
        assert best is not None
        for r, c in zip(*best):
            matching[r] = c
    else:
        free_rows, free_cols = set(range(B_true)), set(range(B_fit))
        for _ in range(k):
            r, c = max(
                ((r, c) for r in sorted(free_rows) for c in sorted(free_cols)),
                key=lambda rc: (overlap[rc], -rc[0], -rc[1]),
            )
            matching[r] = c
            free_rows.discard(r)
            free_cols.discard(c)
    for r in range(B_true):
        if matching[r] is None:
            matching[r] = int(np.argmax(overlap[r]))
    return matching


def matched_individual_ari(
    fit: FitResult,
    truth: LabeledSample,
    partitions: PartitionSet | None = None,
) -> EvaluationReport:
    """
    Score a fit against the truth. `partitions` overrides the fit's MAP
    partitions (e.g. with refined ones) while keeping its block structure.
    """
    labels = partitions or fit.map_partitions
    if labels.B != fit.structure.B:
        raise DataError(f"{labels.B} partitions for a {fit.structure.B}-block fit")
    n_true = truth.data.n
    if any(len(x) != n_true for x in labels.labels):
        raise DataError("fitted partitions and truth have different sample sizes")
    if fit.structure.d != len(truth.true_omega):
        raise DataError(f"fit has {fit.structure.d} variables, truth has {len(truth.true_omega)}")

    B_true = truth.true_partitions.B
    matching = _match_blocks(_overlap(fit.structure, truth.true_omega, B_true))
    per_block = tuple(
        ari(labels.labels[m], truth.true_partitions.labels[b]) if m is not None else 0.0
        for b, m in enumerate(matching)
    )
    true_G = truth.config.G
    return EvaluationReport(
        block_ari=block_ari(fit.structure.omega, truth.true_omega),
        per_block_ari=per_block,
        mean_individual_ari=float(np.mean(per_block)),
        structure_match=fit.structure.B == B_true and sorted(fit.structure.G) == sorted(true_G),
        matching=tuple(matching),
    )
