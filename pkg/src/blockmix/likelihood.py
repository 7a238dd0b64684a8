"""
Discretized block densities, observed-data log-likelihood and penalties.

The histogram density of block b at x_i is

    Σ_g π_bg Π_{j∈Ω_b} α_{g j r(i,j)} / |I_{j r(i,j)}|

and everything here is evaluated in log space with log-sum-exp over the
components. The penalty is decomposable into a per-block term for π_b and a
per-(block, variable) term for α_bj; the modified EM relies on that to
reassign variables one at a time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .constants import PenaltyKind
from .errors import ConfigError, DataError
from .models import DiscreteParameters, DiscretizedData, ModelStructure

# (n, G_b) -> a_{n,π_b,R}
PiTerm = Callable[[int, int], float]
# (n, G_b, R_j) -> a_{n,α_Rbj,R}
AlphaTerm = Callable[[int, int, int], float]


def _bic_pi_term(n: int, g: int) -> float:
    return (g - 1) * math.log(n) / 2.0


def _bic_alpha_term(n: int, g: int, r: int) -> float:
    return (r - 1) * g * math.log(n) / 2.0


@dataclass(frozen=True)
class PenaltySpec:
    kind: PenaltyKind = PenaltyKind.BIC
    pi_term: PiTerm | None = None
    alpha_term: AlphaTerm | None = None

    def __post_init__(self) -> None:
        if self.kind is PenaltyKind.CUSTOM and (self.pi_term is None or self.alpha_term is None):
            raise ConfigError("a custom penalty needs both pi_term and alpha_term")

    @classmethod
    def bic(cls) -> "PenaltySpec":
        return cls(PenaltyKind.BIC)

    @classmethod
    def custom(cls, pi_term: PiTerm, alpha_term: AlphaTerm) -> "PenaltySpec":
        return cls(PenaltyKind.CUSTOM, pi_term, alpha_term)

    def block_term(self, n: int, g: int) -> float:
        fn = self.pi_term if self.kind is PenaltyKind.CUSTOM else _bic_pi_term
        return float(fn(n, g))

    def variable_term(self, n: int, g: int, r: int) -> float:
        fn = self.alpha_term if self.kind is PenaltyKind.CUSTOM else _bic_alpha_term
        return float(fn(n, g, r))


@dataclass(frozen=True)
class PenaltyTerms:
    total: float
    block_terms: tuple[float, ...]     # a_{n,π_b,R}, one per block
    variable_terms: tuple[float, ...]  # a_{n,α_R ω_j j,R}, one per variable


def penalty(spec: PenaltySpec, n: int, structure: ModelStructure, n_levels: Sequence[int]) -> PenaltyTerms:
    if len(n_levels) != structure.d:
        raise DataError(f"{len(n_levels)} bin counts for d={structure.d}")
    blocks = tuple(spec.block_term(n, g) for g in structure.G)
    variables = tuple(
        spec.variable_term(n, structure.G[b], int(n_levels[j])) for j, b in enumerate(structure.omega)
    )
    return PenaltyTerms(total=math.fsum(blocks) + math.fsum(variables), block_terms=blocks, variable_terms=variables)


def block_component_logits(
    disc: DiscretizedData,
    structure: ModelStructure,
    params: DiscreteParameters,
    b: int,
) -> np.ndarray:
    """n×G_b matrix of ln π_bg + Σ_{j∈Ω_b} ln α_{g j r(i,j)} (bin measures omitted)."""
    out = np.broadcast_to(np.log(params.pi[b]), (disc.n, structure.G[b])).copy()
    for j in structure.block_variables(b):
        out += np.log(params.alpha[j])[:, disc.codes[:, j]].T
    return out


def _block_log_measures(disc: DiscretizedData, structure: ModelStructure, b: int) -> np.ndarray:
    out = np.zeros(disc.n)
    for j in structure.block_variables(b):
        out += disc.log_measures[j]
    return out


def block_log_densities(
    disc: DiscretizedData,
    structure: ModelStructure,
    params: DiscreteParameters,
    b: int,
) -> np.ndarray:
    """Per-observation log histogram density of block b."""
    logits = block_component_logits(disc, structure, params, b)
    return logsumexp(logits, axis=1) - _block_log_measures(disc, structure, b)


def block_log_density(
    row_levels: Sequence[int],
    pi_b: np.ndarray,
    alphas: Sequence[np.ndarray],
    measures: Sequence[np.ndarray],
) -> float:
    """
    Log density of one observation in one block.

    `row_levels[k]` is the 0-based level of the k-th variable of the block,
    `alphas[k]` its G_b×R table and `measures[k]` its bin lengths.
    """
    if not (len(row_levels) == len(alphas) == len(measures)):
        raise DataError("levels, alpha tables and measures must align")
    terms = np.log(np.asarray(pi_b, dtype=float)).copy()
    for r, a, m in zip(row_levels, alphas, measures):
        terms += np.log(np.asarray(a)[:, int(r)]) - math.log(float(np.asarray(m)[int(r)]))
    return float(logsumexp(terms))


def _check_dims(disc: DiscretizedData, structure: ModelStructure, params: DiscreteParameters) -> None:
    if structure.d != disc.d or len(params.alpha) != disc.d:
        raise DataError(f"structure/parameters describe {structure.d} variables, data has {disc.d}")
    if len(params.pi) != structure.B:
        raise DataError(f"{len(params.pi)} mixing vectors for B={structure.B}")
    for j, b in enumerate(structure.omega):
        if params.alpha[j].shape != (structure.G[b], disc.n_levels[j]):
            raise DataError(f"alpha table of variable {j} has shape {params.alpha[j].shape}")


def log_likelihood(disc: DiscretizedData, structure: ModelStructure, params: DiscreteParameters) -> float:
    _check_dims(disc, structure, params)
    # Blocks are summed separately; np.sum reduces pairwise, in a fixed order.
    per_block = [float(np.sum(block_log_densities(disc, structure, params, b))) for b in range(structure.B)]
    return math.fsum(per_block)


def penalized_log_likelihood(
    disc: DiscretizedData,
    structure: ModelStructure,
    params: DiscreteParameters,
    spec: PenaltySpec,
) -> float:
    return log_likelihood(disc, structure, params) - penalty(spec, disc.n, structure, disc.n_levels).total
