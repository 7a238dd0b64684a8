from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .constants import MIN_BLOCK_SIZE
from .errors import DataError
from .models import ModelStructure, PartitionSet, Responsibilities


@dataclass(frozen=True)
class StructureVerdict:
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_structure(structure: ModelStructure, d: int, B_max: int, G_max: int) -> StructureVerdict:
    """
    Membership of `structure` in the competing set: B <= B_max, G_b <= G_max,
    |Ω_b| >= 3 for every block. Violations are reported 1-based, as users see them.
    """
    out: list[str] = []
    if structure.d != d:
        out.append(f"omega has {structure.d} entries for d={d}")
    if structure.B > B_max:
        out.append(f"B={structure.B} exceeds B_max={B_max}")
    for b, (g, size) in enumerate(zip(structure.G, structure.block_sizes), start=1):
        if g > G_max:
            out.append(f"G_{b}={g} exceeds G_max={G_max}")
        if size == 0:
            out.append(f"block {b} is empty")
        if size < MIN_BLOCK_SIZE:
            out.append(f"|Ω_{b}| ≥ {MIN_BLOCK_SIZE} fails ({size} variables)")
    return StructureVerdict(tuple(out))


def complexity(structure: ModelStructure, n_levels: Sequence[int]) -> int:
    """ν_m = Σ_b (G_b − 1) + Σ_{j∈Ω_b} (R_j − 1)·G_b."""
    if len(n_levels) != structure.d:
        raise DataError(f"{len(n_levels)} bin counts for d={structure.d}")
    nu = sum(g - 1 for g in structure.G)
    for j, b in enumerate(structure.omega):
        nu += (int(n_levels[j]) - 1) * structure.G[b]
    return int(nu)


def map_partition(resp: Responsibilities) -> PartitionSet:
    # np.argmax returns the first maximum: ties go to the smallest label.
    return PartitionSet(tuple(np.argmax(t, axis=1) for t in resp.t))
