from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import pytest

from blockmix.binning import build_scheme, discretize
from blockmix.models import (
    DiscreteParameters,
    DiscretizedData,
    FitResult,
    ModelStructure,
    PartitionSet,
    Responsibilities,
)
from blockmix.simulation import LabeledSample, SimulationConfig, generate


@pytest.fixture
def two_block_sample() -> LabeledSample:
    """Two blocks of four variables, two well-separated components each."""
    return generate(SimulationConfig(B=2, G=(2, 2), block_size=4, n=300, tau=4.0), seed=7)


@pytest.fixture
def two_block_disc(two_block_sample: LabeledSample) -> DiscretizedData:
    data = two_block_sample.data
    return discretize(data, build_scheme(data, 4))


def _make_fit(structure: ModelStructure, labels: Sequence[Sequence[int]], n_levels: int = 2) -> FitResult:
    labels = [np.asarray(x, dtype=np.intp) for x in labels]
    n = len(labels[0])
    return FitResult(
        structure=structure,
        params=DiscreteParameters(
            pi=tuple(np.full(g, 1.0 / g) for g in structure.G),
            alpha=tuple(np.full((structure.G[b], n_levels), 1.0 / n_levels) for b in structure.omega),
            epsilon=1e-3,
        ),
        penalized_loglik=0.0,
        loglik=0.0,
        penalty=0.0,
        responsibilities=Responsibilities(tuple(np.eye(g)[lab] for g, lab in zip(structure.G, labels))),
        map_partitions=PartitionSet(tuple(labels)),
        n_iterations=1,
        converged=True,
        n_levels=(n_levels,) * structure.d,
        n_obs=n,
    )


@pytest.fixture
def fit_factory() -> Callable[..., FitResult]:
    """Build a FitResult around given labels, with placeholder parameters."""
    return _make_fit
