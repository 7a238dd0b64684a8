import itertools
import math

import numpy as np
import pytest

from blockmix.binning import choose_num_bins
from blockmix.constants import ColumnKind, PenaltyKind
from blockmix.errors import ConfigError, DataError
from blockmix.likelihood import (
    PenaltySpec,
    block_log_densities,
    block_log_density,
    log_likelihood,
    penalized_log_likelihood,
    penalty,
)
from blockmix.models import BinningScheme, DiscreteParameters, DiscretizedData, ModelStructure, VariableBins
from blockmix.structure import complexity


def _random_simplex(rng, shape):
    x = rng.random(shape) + 0.05
    return x / x.sum(axis=-1, keepdims=True)


def _scheme(measures):
    variables = []
    for m in measures:
        m = np.asarray(m, dtype=float)
        edges = np.concatenate(([0.0], np.cumsum(m)))
        variables.append(VariableBins(ColumnKind.CONTINUOUS, len(m), m, edges))
    return BinningScheme(tuple(variables))


@pytest.mark.parametrize(
    "structure",
    [
        ModelStructure(B=1, G=(1,), omega=(0, 0, 0)),
        ModelStructure(B=1, G=(2,), omega=(0, 0, 0)),
        ModelStructure(B=2, G=(2, 1), omega=(0, 0, 1)),
        ModelStructure(B=2, G=(2, 2), omega=(1, 0, 1)),
    ],
)
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_histogram_density_integrates_to_one(structure, seed):
    rng = np.random.default_rng(seed)
    measures = [rng.random(2) + 0.1 for _ in range(3)]
    pi = [_random_simplex(rng, g) for g in structure.G]
    alpha = [_random_simplex(rng, (structure.G[b], 2)) for b in structure.omega]

    total = 0.0
    for cell in itertools.product(range(2), repeat=3):
        log_density = 0.0
        for b in range(structure.B):
            members = structure.block_variables(b)
            log_density += block_log_density(
                [cell[j] for j in members],
                pi[b],
                [alpha[j] for j in members],
                [measures[j] for j in members],
            )
        volume = math.prod(measures[j][cell[j]] for j in range(3))
        total += math.exp(log_density) * volume
    assert abs(total - 1.0) < 1e-10


def test_log_likelihood_matches_a_row_by_row_sum():
    rng = np.random.default_rng(3)
    scheme = _scheme([[0.5, 1.0, 2.0], [1.0, 1.0], [0.2, 0.3, 0.4], [1.0, 3.0]])
    codes = np.column_stack([rng.integers(r, size=25) for r in scheme.n_levels])
    disc = DiscretizedData(codes, scheme)
    structure = ModelStructure(B=2, G=(2, 3), omega=(0, 1, 0, 1))
    params = DiscreteParameters(
        pi=tuple(_random_simplex(rng, g) for g in structure.G),
        alpha=tuple(_random_simplex(rng, (structure.G[b], scheme.n_levels[j])) for j, b in enumerate(structure.omega)),
        epsilon=1e-3,
    )
    expected = 0.0
    for i in range(disc.n):
        for b in range(structure.B):
            members = structure.block_variables(b)
            expected += block_log_density(
                [codes[i, j] for j in members],
                params.pi[b],
                [params.alpha[j] for j in members],
                [scheme.variables[j].measures for j in members],
            )
    assert log_likelihood(disc, structure, params) == pytest.approx(expected, rel=1e-12)
    per_block = sum(block_log_densities(disc, structure, params, b).sum() for b in range(structure.B))
    assert per_block == pytest.approx(expected, rel=1e-12)


def test_bic_penalty():
    n = 100
    s = ModelStructure(B=1, G=(2,), omega=(0, 0, 0))
    terms = penalty(PenaltySpec.bic(), n, s, (3, 3, 3))
    assert terms.block_terms == pytest.approx((math.log(n) / 2,))
    assert terms.variable_terms == pytest.approx((2 * math.log(n),) * 3)
    assert terms.total == pytest.approx(13 * math.log(n) / 2)


def test_penalty_matches_complexity_times_half_log_n():
    s = ModelStructure(B=2, G=(3, 2), omega=(0, 1, 0, 1, 0, 1))
    levels = (2, 3, 4, 5, 2, 3)
    n = 250
    assert penalty(PenaltySpec.bic(), n, s, levels).total == pytest.approx(complexity(s, levels) * math.log(n) / 2)


def test_custom_penalty():
    spec = PenaltySpec.custom(lambda n, g: 0.0, lambda n, g, r: 0.0)
    rng = np.random.default_rng(4)
    scheme = _scheme([[1.0, 1.0]] * 3)
    disc = DiscretizedData(rng.integers(2, size=(10, 3)), scheme)
    s = ModelStructure(B=1, G=(2,), omega=(0, 0, 0))
    params = DiscreteParameters(
        pi=(np.array([0.4, 0.6]),),
        alpha=tuple(np.array([[0.3, 0.7], [0.6, 0.4]]) for _ in range(3)),
        epsilon=1e-3,
    )
    assert penalized_log_likelihood(disc, s, params, spec) == log_likelihood(disc, s, params)


def test_custom_penalty_needs_both_terms():
    with pytest.raises(ConfigError):
        PenaltySpec(PenaltyKind.CUSTOM, pi_term=lambda n, g: 0.0)


def test_dimension_mismatch_raises():
    scheme = _scheme([[1.0, 1.0]] * 3)
    disc = DiscretizedData(np.zeros((4, 3), dtype=int), scheme)
    s = ModelStructure(B=1, G=(2,), omega=(0, 0, 0))
    wrong = DiscreteParameters(pi=(np.array([0.5, 0.5]),), alpha=(np.full((2, 2), 0.5),) * 2, epsilon=1e-3)
    with pytest.raises(DataError):
        log_likelihood(disc, s, wrong)
    bad_shape = DiscreteParameters(pi=(np.array([0.5, 0.5]),), alpha=(np.full((3, 2), 0.5),) * 3, epsilon=1e-3)
    with pytest.raises(DataError):
        log_likelihood(disc, s, bad_shape)


def test_bic_penalty_grows_with_every_dimension():
    n = 500
    base = penalty(PenaltySpec.bic(), n, ModelStructure(B=2, G=(2, 2), omega=(0, 0, 0, 1, 1, 1)), (4,) * 6).total
    more_components = penalty(PenaltySpec.bic(), n, ModelStructure(B=2, G=(3, 2), omega=(0, 0, 0, 1, 1, 1)), (4,) * 6)
    more_bins = penalty(PenaltySpec.bic(), n, ModelStructure(B=2, G=(2, 2), omega=(0, 0, 0, 1, 1, 1)), (5,) + (4,) * 5)
    bigger_block = penalty(PenaltySpec.bic(), n, ModelStructure(B=2, G=(3, 2), omega=(0, 0, 0, 0, 1, 1)), (4,) * 6)
    assert more_components.total > base
    assert more_bins.total > base
    assert bigger_block.total > more_components.total


def test_bic_penalty_trends_in_n():
    s = ModelStructure(B=2, G=(2, 2), omega=(0, 0, 0, 1, 1, 1))
    per_obs, bins_per_penalty = [], []
    for n in (10**2, 10**3, 10**4, 10**5):
        R = choose_num_bins(n, 4)
        a = penalty(PenaltySpec.bic(), n, s, (R,) * 6).total
        per_obs.append(a / n)
        bins_per_penalty.append(R / a)
    assert all(x > y for x, y in zip(per_obs, per_obs[1:]))
    assert all(x > y for x, y in zip(bins_per_penalty, bins_per_penalty[1:]))
    # the nested model with one fewer component always wins on equal fit
    small = ModelStructure(B=2, G=(1, 2), omega=s.omega)
    for n in (10**2, 10**5):
        levels = (choose_num_bins(n, 4),) * 6
        assert penalty(PenaltySpec.bic(), n, s, levels).total / penalty(PenaltySpec.bic(), n, small, levels).total > 1
