"""
Model selection for the multiple-partitions model on discretized data.

For a fixed (B, G) the modified EM alternates

    E-step   t_ibg ∝ π_bg Π_{j∈Ω_b} α_{g j r(i,j)}
    M-step1  ω_j = argmax_b  Σ_g max_α Q(α | x_j, t_bg) − a_{n,α_bj}
    M-step2  π_bg = mean_i t_ibg,  α_gj = weighted bin frequencies

which never decreases the penalized observed-data log-likelihood. Variables
are reassigned independently, so blocks can empty out; they are pruned at the
end of a run. The outer search runs every (B, G) of a candidate grid from
several random starts and keeps the best penalized objective.

Randomness: every run draws from its own `SeedSequence(master_seed,
spawn_key=(candidate, restart))`, so serial and threaded runs agree bit for bit.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.special import logsumexp

from .constants import (
    DEFAULT_B_MAX,
    DEFAULT_G_MAX,
    DEFAULT_MAX_ITERATIONS,
    DEFAULT_REL_TOLERANCE,
    DEFAULT_RESTARTS,
    MIN_BLOCK_SIZE,
)
from .errors import ConfigError, DataError, NumericError
from .likelihood import PenaltySpec, block_component_logits, log_likelihood, penalty
from .models import (
    CandidateSummary,
    DiscreteParameters,
    DiscretizedData,
    FitResult,
    ModelStructure,
    PartitionSet,
    Responsibilities,
)
from .structure import map_partition, validate_structure

logger = logging.getLogger(__name__)

Seed = int | np.random.SeedSequence


@dataclass(frozen=True)
class EMConfig:
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    rel_tolerance: float = DEFAULT_REL_TOLERANCE
    n_restarts: int = DEFAULT_RESTARTS
    # None: 1 / (10·n·R_max), resolved against the data
    epsilon: float | None = None
    master_seed: int = 0
    n_jobs: int = 1

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ConfigError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.n_restarts < 1:
            raise ConfigError(f"n_restarts must be >= 1, got {self.n_restarts}")
        if self.rel_tolerance < 0:
            raise ConfigError(f"rel_tolerance must be >= 0, got {self.rel_tolerance}")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if self.n_jobs == 0:
            raise ConfigError("n_jobs must be non-zero")

    def resolve_epsilon(self, n: int, n_levels: Sequence[int]) -> float:
        r_max = max(n_levels)
        eps = self.epsilon if self.epsilon is not None else 1.0 / (10.0 * n * r_max)
        if not 0 < eps < 1.0 / r_max:
            raise ConfigError(f"epsilon={eps} must lie in (0, 1/R_max={1.0 / r_max})")
        return float(eps)


@dataclass(frozen=True)
class CandidateGrid:
    B_max: int = DEFAULT_B_MAX
    G_max: int = DEFAULT_G_MAX
    candidates: tuple[tuple[int, tuple[int, ...]], ...] = field(default_factory=tuple)

    @classmethod
    def build(cls, B_max: int = DEFAULT_B_MAX, G_max: int = DEFAULT_G_MAX, d: int | None = None) -> "CandidateGrid":
        """
        Every (B, G) with B <= B_max and G a non-decreasing tuple bounded by
        G_max. Blocks are exchangeable, so permuted G tuples are not repeated.
        With `d` given, B is also capped at d // 3 (each block needs 3 variables).
        """
        if B_max < 1 or G_max < 1:
            raise ConfigError(f"B_max and G_max must be >= 1, got {B_max}, {G_max}")
        top = B_max if d is None else min(B_max, max(1, d // MIN_BLOCK_SIZE))
        pairs = tuple(
            (B, G)
            for B in range(1, top + 1)
            for G in itertools.combinations_with_replacement(range(1, G_max + 1), B)
        )
        return cls(B_max=B_max, G_max=G_max, candidates=pairs)


# ---------- simplex helpers -------------------------------------------------


def clamp_simplex(p: np.ndarray, epsilon: float) -> np.ndarray:
    """
    Project rows of `p` onto S_{K,ε}: entries below ε are set to ε and the
    others rescaled to fill 1 − k·ε. Repeats until no free entry falls below
    ε; the result is the maximizer of Σ N_r ln α_r over the clamped simplex
    when `p` holds normalized weights N.
    """
    out = np.array(p, dtype=float)
    single = out.ndim == 1
    out = np.atleast_2d(out)
    k = out.shape[-1]
    if epsilon * k >= 1.0:
        raise NumericError(f"clamped simplex is empty for epsilon={epsilon}, K={k}")
    mask = out < epsilon
    for _ in range(k):
        if not mask.any():
            break
        free = np.where(mask, 0.0, out)
        mass = 1.0 - mask.sum(axis=-1, keepdims=True) * epsilon
        total = free.sum(axis=-1, keepdims=True)
        out = np.where(mask, epsilon, free * (mass / np.where(total > 0, total, 1.0)))
        fresh = (out < epsilon) & ~mask
        if not fresh.any():
            break
        mask |= fresh
    return out[0] if single else out


def _weighted_frequencies(t: np.ndarray, indicator: np.ndarray) -> np.ndarray:
    """G×R table Σ_i t_ig σ_r(x_ij) / Σ_i t_ig; zero-weight components get a uniform row."""
    counts = t.T @ indicator
    totals = counts.sum(axis=1, keepdims=True)
    uniform = np.full_like(counts, 1.0 / counts.shape[1])
    return np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), uniform)


# ---------- EM building blocks ----------------------------------------------


def _rng(seed: Seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def init_random(
    disc: DiscretizedData,
    B: int,
    G: Sequence[int],
    seed: Seed,
    epsilon: float | None = None,
    omega: Sequence[int] | None = None,
) -> tuple[tuple[int, ...], DiscreteParameters]:
    """
    Random starting point: ω uniform over assignments that leave no block
    empty (unless `omega` is given), uniform π, and α rows halfway between the
    empirical bin frequencies and a uniform random probability vector.
    """
    d = disc.d
    if d < B:
        raise DataError(f"cannot spread d={d} variables over B={B} blocks")
    G = tuple(int(g) for g in G)
    eps = epsilon if epsilon is not None else EMConfig().resolve_epsilon(disc.n, disc.n_levels)
    rng = _rng(seed)

    if omega is not None:
        if len(omega) != d or any(not 0 <= b < B for b in omega):
            raise DataError(f"omega must hold {d} block indices in 0..{B - 1}")
        omega = np.asarray(omega, dtype=int)
    elif B == 1:
        omega = np.zeros(d, dtype=int)
    else:
        while True:
            omega = rng.integers(B, size=d)
            if np.unique(omega).size == B:
                break

    pi = tuple(np.full(g, 1.0 / g) for g in G)
    alpha = []
    for j in range(d):
        freq = disc.indicators[j].mean(axis=0)
        g = G[omega[j]]
        noise = rng.dirichlet(np.ones(disc.n_levels[j]), size=g)
        alpha.append(clamp_simplex(0.5 * freq[None, :] + 0.5 * noise, eps))
    return tuple(int(b) for b in omega), DiscreteParameters(pi=pi, alpha=tuple(alpha), epsilon=eps)


def e_step(disc: DiscretizedData, structure: ModelStructure, params: DiscreteParameters) -> Responsibilities:
    out = []
    for b in range(structure.B):
        logits = block_component_logits(disc, structure, params, b)
        out.append(np.exp(logits - logsumexp(logits, axis=1, keepdims=True)))
    return Responsibilities(tuple(out))


def predict(disc: DiscretizedData, structure: ModelStructure, params: DiscreteParameters) -> PartitionSet:
    """MAP labels of (possibly new) rows binned with the fit's own scheme."""
    if disc.d != structure.d:
        raise DataError(f"data has {disc.d} variables, the fit has {structure.d}")
    return map_partition(e_step(disc, structure, params))


def variable_block_criteria(
    disc: DiscretizedData,
    resp: Responsibilities,
    G: Sequence[int],
    penalty_spec: PenaltySpec,
    epsilon: float,
) -> np.ndarray:
    """
    d×B matrix of Σ_g max_{α∈S_{R,ε}} Q(α | x_j, t_bg) − a_{n,α_bj}: the
    M-step1 score of putting variable j in block b.
    """
    n, d = disc.n, disc.d
    out = np.empty((d, len(G)))
    for j in range(d):
        ind = disc.indicators[j]
        for b, g in enumerate(G):
            counts = resp.t[b].T @ ind
            alpha = clamp_simplex(_weighted_frequencies(resp.t[b], ind), epsilon)
            q = float(np.sum(counts * np.log(alpha)))
            out[j, b] = q - penalty_spec.variable_term(n, int(g), disc.n_levels[j])
    return out


def m_step_variables(
    disc: DiscretizedData,
    resp: Responsibilities,
    B: int,
    G: Sequence[int],
    penalty_spec: PenaltySpec,
    epsilon: float | None = None,
) -> tuple[int, ...]:
    if len(resp.t) != B or len(G) != B:
        raise DataError(f"responsibilities for {len(resp.t)} blocks, B={B}")
    eps = epsilon if epsilon is not None else EMConfig().resolve_epsilon(disc.n, disc.n_levels)
    crit = variable_block_criteria(disc, resp, G, penalty_spec, eps)
    # first maximum: ties go to the smallest block
    return tuple(int(b) for b in np.argmax(crit, axis=1))


def m_step_parameters(
    disc: DiscretizedData,
    resp: Responsibilities,
    omega: Sequence[int],
    G: Sequence[int],
    epsilon: float,
) -> DiscreteParameters:
    pi = tuple(clamp_simplex(t.mean(axis=0), epsilon) for t in resp.t)
    alpha = tuple(
        clamp_simplex(_weighted_frequencies(resp.t[b], disc.indicators[j]), epsilon)
        for j, b in enumerate(omega)
    )
    return DiscreteParameters(pi=pi, alpha=alpha, epsilon=epsilon)


# ---------- one EM run ------------------------------------------------------


def _finish(
    disc: DiscretizedData,
    structure: ModelStructure,
    params: DiscreteParameters,
    penalty_spec: PenaltySpec,
    n_iterations: int,
    converged: bool,
    trace: Sequence[float],
) -> FitResult:
    resp = e_step(disc, structure, params)
    ll = log_likelihood(disc, structure, params)
    pen = penalty(penalty_spec, disc.n, structure, disc.n_levels).total
    return FitResult(
        structure=structure,
        params=params,
        penalized_loglik=ll - pen,
        loglik=ll,
        penalty=pen,
        responsibilities=resp,
        map_partitions=map_partition(resp),
        n_iterations=n_iterations,
        converged=converged,
        n_levels=tuple(disc.n_levels),
        n_obs=disc.n,
        trace=tuple(trace),
    )


def run_em(
    disc: DiscretizedData,
    B: int,
    G: Sequence[int],
    config: EMConfig,
    seed: Seed,
    penalty_spec: PenaltySpec | None = None,
    fixed_omega: Sequence[int] | None = None,
) -> FitResult:
    """
    One modified-EM run from a random start. With `fixed_omega` the variable
    assignment is held fixed and the run is plain EM for that structure.
    """
    spec = penalty_spec or PenaltySpec.bic()
    G = tuple(int(g) for g in G)
    eps = config.resolve_epsilon(disc.n, disc.n_levels)
    omega, params = init_random(disc, B, G, seed, eps, omega=fixed_omega)
    structure = ModelStructure(B, G, omega)

    def objective(s: ModelStructure, p: DiscreteParameters) -> float:
        value = log_likelihood(disc, s, p) - penalty(spec, disc.n, s, disc.n_levels).total
        if not math.isfinite(value):
            raise NumericError(f"non-finite objective for B={B}, G={G}")
        return value

    prev = objective(structure, params)
    trace: list[float] = []
    converged = False
    iteration = 0
    for iteration in range(1, config.max_iterations + 1):
        resp = e_step(disc, structure, params)
        if fixed_omega is None:
            omega = m_step_variables(disc, resp, B, G, spec, eps)
        params = m_step_parameters(disc, resp, omega, G, eps)
        structure = ModelStructure(B, G, omega)
        current = objective(structure, params)
        trace.append(current)
        if all(g == 1 for g in G):
            # no latent classes: the first M-step is already the closed-form optimum
            converged = True
            break
        if abs(current - prev) <= config.rel_tolerance * abs(prev):
            converged = True
            break
        prev = current

    logger.debug("EM B=%d G=%s: %d iterations, converged=%s, objective=%.6f", B, G, iteration, converged, trace[-1])
    fit = _finish(disc, structure, params, spec, iteration, converged, trace)
    return prune_empty_blocks(fit, spec)


def prune_empty_blocks(fit: FitResult, penalty_spec: PenaltySpec | None = None) -> FitResult:
    """Drop blocks with no variables, re-index the rest in order and re-price the penalty."""
    s = fit.structure
    used = [b for b in range(s.B) if b in set(s.omega)]
    if len(used) == s.B:
        return fit
    if not used:
        raise NumericError("every block is empty")
    spec = penalty_spec or PenaltySpec.bic()
    remap = {old: new for new, old in enumerate(used)}
    structure = ModelStructure(
        B=len(used),
        G=tuple(s.G[b] for b in used),
        omega=tuple(remap[b] for b in s.omega),
    )
    params = DiscreteParameters(
        pi=tuple(fit.params.pi[b] for b in used),
        alpha=fit.params.alpha,
        epsilon=fit.params.epsilon,
    )
    resp = Responsibilities(tuple(fit.responsibilities.t[b] for b in used))
    pen = penalty(spec, fit.n_obs, structure, fit.n_levels).total
    return replace(
        fit,
        structure=structure,
        params=params,
        responsibilities=resp,
        map_partitions=map_partition(resp),
        penalty=pen,
        penalized_loglik=fit.loglik - pen,
    )


# ---------- outer search ----------------------------------------------------


def restart_seed(master_seed: int, candidate: int, restart: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(candidate, restart))


def _run_task(
    disc: DiscretizedData,
    candidate: int,
    restart: int,
    B: int,
    G: tuple[int, ...],
    config: EMConfig,
    spec: PenaltySpec,
) -> tuple[int, int, FitResult]:
    fit = run_em(disc, B, G, config, restart_seed(config.master_seed, candidate, restart), spec)
    return candidate, restart, fit


def select_model(
    disc: DiscretizedData,
    grid: CandidateGrid,
    config: EMConfig,
    penalty_spec: PenaltySpec | None = None,
) -> FitResult:
    """
    Best penalized fit over the grid. Pruned fits that leave the competing set
    (a block with fewer than 3 variables) are kept only as a fallback: any
    admissible fit outranks them, among the restarts of one candidate as well
    as across candidates. Ties go to the lower candidate index, then the lower
    restart index.
    """
    if not grid.candidates:
        raise ConfigError("the candidate grid is empty")
    spec = penalty_spec or PenaltySpec.bic()
    runnable = [(ci, B, G) for ci, (B, G) in enumerate(grid.candidates) if B <= disc.d]
    if not runnable:
        raise DataError(f"no candidate has B <= d={disc.d}")
    logger.info(
        "selecting among %d candidates × %d restarts (n=%d, d=%d)",
        len(runnable), config.n_restarts, disc.n, disc.d,
    )

    tasks = [(ci, r, B, G) for ci, B, G in runnable for r in range(config.n_restarts)]
    results = Parallel(n_jobs=config.n_jobs, prefer="threads")(
        delayed(_run_task)(disc, ci, r, B, G, config, spec) for ci, r, B, G in tasks
    )

    best_per_candidate: dict[int, tuple[tuple[bool, float, int], int, FitResult]] = {}
    for ci, r, fit in results:
        admissible = validate_structure(fit.structure, disc.d, grid.B_max, grid.G_max).ok
        key = (admissible, fit.penalized_loglik, -r)
        held = best_per_candidate.get(ci)
        if held is None or key > held[0]:
            best_per_candidate[ci] = (key, r, fit)

    summaries: list[CandidateSummary] = []
    winner: tuple[bool, float, int] | None = None
    winner_fit: FitResult | None = None
    for ci, B, G in runnable:
        (admissible, _, _), r, fit = best_per_candidate[ci]
        summaries.append(
            CandidateSummary(
                B=B,
                G=tuple(G),
                best_penalized_loglik=fit.penalized_loglik,
                best_restart=r,
                selected_structure=fit.structure,
                admissible=admissible,
            )
        )
        logger.info(
            "candidate B=%d G=%s: best objective %.4f (restart %d)%s",
            B, tuple(G), fit.penalized_loglik, r, "" if admissible else " [outside the competing set]",
        )
        key = (admissible, fit.penalized_loglik, -ci)
        if winner is None or key > winner:
            winner, winner_fit = key, fit

    assert winner_fit is not None
    return replace(winner_fit, candidates=tuple(summaries))
