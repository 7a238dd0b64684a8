"""
Synthetic multiple-partitions data.

B independent blocks of `block_size` variables. In block b an observation
belongs to component g with probability π_bg, and its k-th variable is
shifted by τ when k ≡ g (mod G_b) on the within-block index (1-based, with
residue 0 standing for g = G_b); the noise ξ is i.i.d. standard Gaussian,
Student t(3) or unit Laplace.

τ is usually chosen to hit a target Bayes misclassification rate of a block,
estimated by Monte Carlo and inverted by bisection with common random numbers
(one fixed calibration draw for every τ tried).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .constants import (
    CALIBRATION_SEED,
    DEFAULT_CALIBRATION_MC,
    DEFAULT_CALIBRATION_TOL,
    MIN_BLOCK_SIZE,
    ColumnKind,
    NoiseFamily,
)
from .errors import ConfigError
from .models import Dataset, PartitionSet

logger = logging.getLogger(__name__)

_NOISE_LAW = {
    NoiseFamily.GAUSSIAN: stats.norm(),
    NoiseFamily.STUDENT3: stats.t(df=3),
    NoiseFamily.LAPLACE: stats.laplace(),
}


@dataclass(frozen=True)
class SimulationConfig:
    B: int = 3
    G: tuple[int, ...] = (3, 3, 3)
    block_size: int = 6
    n: int = 400
    noise: NoiseFamily = NoiseFamily.GAUSSIAN
    tau: float | None = None
    target_miscl: float | None = None
    # per-block mixing proportions; None means uniform
    proportions: tuple[tuple[float, ...], ...] | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "G", tuple(int(g) for g in self.G))
        object.__setattr__(self, "noise", NoiseFamily(self.noise))
        if self.B < 1 or len(self.G) != self.B or any(g < 1 for g in self.G):
            raise ConfigError(f"need B >= 1 and B positive component counts, got B={self.B}, G={self.G}")
        if self.block_size < MIN_BLOCK_SIZE:
            raise ConfigError(f"block_size must be >= {MIN_BLOCK_SIZE}, got {self.block_size}")
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if (self.tau is None) == (self.target_miscl is None):
            raise ConfigError("tau and target_miscl are mutually exclusive; set exactly one")
        if self.tau is not None and self.tau < 0:
            raise ConfigError(f"tau must be >= 0, got {self.tau}")
        if self.target_miscl is not None:
            ceiling = min((g - 1) / g for g in self.G)
            if not 0 < self.target_miscl < ceiling:
                raise ConfigError(f"target_miscl must lie in (0, {ceiling:.4f}), got {self.target_miscl}")
        if self.proportions is not None:
            props = tuple(tuple(float(p) for p in row) for row in self.proportions)
            if len(props) != self.B or any(len(p) != g for p, g in zip(props, self.G)):
                raise ConfigError("proportions must give G_b values for every block")
            if any(abs(sum(p) - 1.0) > 1e-9 or min(p) < 0 for p in props):
                raise ConfigError("each block's proportions must be a probability vector")
            object.__setattr__(self, "proportions", props)

    @property
    def d(self) -> int:
        return self.B * self.block_size

    def block_proportions(self, b: int) -> np.ndarray:
        if self.proportions is None:
            return np.full(self.G[b], 1.0 / self.G[b])
        return np.asarray(self.proportions[b])


@dataclass(frozen=True, eq=False)
class LabeledSample:
    data: Dataset
    true_omega: tuple[int, ...]
    true_partitions: PartitionSet
    tau_used: float
    config: SimulationConfig = field(repr=False, default_factory=lambda: SimulationConfig(tau=0.0))


def shifted_component(block_size: int, G_b: int) -> np.ndarray:
    """Per within-block variable, the 0-based component whose mean it carries."""
    return np.arange(block_size) % G_b


def _draw_noise(rng: np.random.Generator, family: NoiseFamily, size: tuple[int, ...]) -> np.ndarray:
    if family is NoiseFamily.GAUSSIAN:
        return rng.standard_normal(size)
    if family is NoiseFamily.STUDENT3:
        return rng.standard_t(3, size)
    return rng.laplace(0.0, 1.0, size)


def generate(config: SimulationConfig, seed: int | np.random.SeedSequence | None = None) -> LabeledSample:
    if config.tau is None:
        raise ConfigError("tau is unresolved: calibrate it from target_miscl first")
    rng = np.random.default_rng(config.seed if seed is None else seed)
    tau = float(config.tau)
    columns: list[np.ndarray] = []
    labels: list[np.ndarray] = []
    for b in range(config.B):
        G_b = config.G[b]
        z = rng.choice(G_b, size=config.n, p=config.block_proportions(b))
        shift = shifted_component(config.block_size, G_b)
        x = tau * (z[:, None] == shift[None, :]) + _draw_noise(rng, config.noise, (config.n, config.block_size))
        columns.append(x)
        labels.append(z)
    values = np.hstack(columns)
    data = Dataset(
        values=values,
        column_kinds=(ColumnKind.CONTINUOUS,) * config.d,
        n_levels=(None,) * config.d,
        column_names=tuple(f"X{j + 1}" for j in range(config.d)),
    )
    omega = tuple(int(b) for b in np.repeat(np.arange(config.B), config.block_size))
    return LabeledSample(data=data, true_omega=omega, true_partitions=PartitionSet(tuple(labels)), tau_used=tau, config=config)


# ---------- Bayes error -------------------------------------------------------


@dataclass(frozen=True)
class MonteCarloEstimate:
    rate: float
    stderr: float
    n_mc: int


@dataclass(frozen=True, eq=False)
class _BlockDraw:
    """Common random numbers for one block: labels and noise."""

    z: np.ndarray
    noise: np.ndarray


def _draw_block(config: SimulationConfig, b: int, n_mc: int, seed: int) -> _BlockDraw:
    rng = np.random.default_rng(seed)
    z = rng.choice(config.G[b], size=n_mc, p=config.block_proportions(b))
    return _BlockDraw(z=z, noise=_draw_noise(rng, config.noise, (n_mc, config.block_size)))


def _error_rate(config: SimulationConfig, b: int, draw: _BlockDraw, tau: float) -> MonteCarloEstimate:
    G_b = config.G[b]
    shift = shifted_component(config.block_size, G_b)
    means = tau * (np.arange(G_b)[:, None] == shift[None, :])  # G_b × block_size
    x = draw.noise + means[draw.z]
    law = _NOISE_LAW[config.noise]
    log_post = np.log(config.block_proportions(b))[None, :] + np.stack(
        [law.logpdf(x - means[g]).sum(axis=1) for g in range(G_b)], axis=1
    )
    wrong = (np.argmax(log_post, axis=1) != draw.z).astype(float)
    n_mc = wrong.size
    rate = float(wrong.mean())
    return MonteCarloEstimate(rate=rate, stderr=math.sqrt(rate * (1 - rate) / n_mc), n_mc=n_mc)


def bayes_error_mc(
    config: SimulationConfig,
    tau: float,
    n_mc: int = DEFAULT_CALIBRATION_MC,
    seed: int = CALIBRATION_SEED,
    block: int = 0,
) -> MonteCarloEstimate:
    """Monte-Carlo Bayes misclassification rate of one block under the true mixture."""
    return _error_rate(config, block, _draw_block(config, block, n_mc, seed), float(tau))


def calibrate_tau(
    config: SimulationConfig,
    target: float,
    tol: float = DEFAULT_CALIBRATION_TOL,
    n_mc: int = DEFAULT_CALIBRATION_MC,
    seed: int = CALIBRATION_SEED,
    block: int = 0,
    max_steps: int = 60,
) -> float:
    """τ whose Bayes error is within `tol` of `target`, by bisection on [0, τ_hi]."""
    G_b = config.G[block]
    if not 0 < target < (G_b - 1) / G_b:
        raise ConfigError(f"target rate must lie in (0, {(G_b - 1) / G_b:.4f}), got {target}")
    draw = _draw_block(config, block, n_mc, seed)

    def rate(tau: float) -> float:
        return _error_rate(config, block, draw, tau).rate

    if abs(rate(0.0) - target) <= tol:
        return 0.0
    lo, hi = 0.0, 1.0
    while rate(hi) > target:
        lo, hi = hi, 2.0 * hi
        if hi > 1e6:
            raise ConfigError(f"no separation reaches a rate of {target}")
    mid = 0.5 * (lo + hi)
    for step in range(max_steps):
        mid = 0.5 * (lo + hi)
        r = rate(mid)
        logger.debug("calibration step %d: tau=%.6f rate=%.5f", step, mid, r)
        if abs(r - target) <= tol:
            break
        if r > target:
            lo = mid
        else:
            hi = mid
    return float(mid)


def resolve_tau(config: SimulationConfig, **calibration: float) -> SimulationConfig:
    """Return `config` with τ set, calibrating from the target rate if needed."""
    if config.tau is not None:
        return config
    tau = calibrate_tau(config, float(config.target_miscl), **calibration)
    logger.info("calibrated tau=%.4f for a %.3f misclassification rate (%s)", tau, config.target_miscl, config.noise.value)
    return replace(config, tau=tau, target_miscl=None)
