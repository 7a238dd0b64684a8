"""
Kernel-density refinement of a selected model.

Model selection works on binned data; once (B, G, ω) is fixed, each block is
refitted on the original continuous values with an EM-like scheme whose
class-conditional densities are weighted Gaussian KDEs (weights = current
responsibilities, one global Silverman bandwidth per variable). Categorical
variables keep their multinomial tables from the discretized fit and enter
the E-step as exact class-conditional probabilities.

The plug-in log-likelihood is not guaranteed to increase with this scheme;
iteration stops on a small relative change or at the iteration cap.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from scipy import stats
from scipy.special import logsumexp

from .constants import (
    DEFAULT_REFINE_MAX_ITERATIONS,
    DEFAULT_REFINE_TOLERANCE,
    EMPTY_COMPONENT_WEIGHT,
    KDE_CHUNK_ELEMENTS,
)
from .errors import DataError
from .models import Dataset, FitResult, PartitionSet, Responsibilities

logger = logging.getLogger(__name__)

_TINY = np.finfo(float).tiny


def bandwidth(column: np.ndarray) -> float:
    """Silverman's rule of thumb, 0.9·min(sd, IQR/1.34)·n^(−1/5)."""
    x = np.asarray(column, dtype=float)
    if x.size < 2 or np.ptp(x) == 0:
        raise DataError("constant column: bandwidth undefined")
    sd = float(np.std(x, ddof=1))
    spread = float(stats.iqr(x)) / 1.34
    scale = min(sd, spread) if spread > 0 else sd
    return 0.9 * scale * x.size ** (-0.2)


def _kernel_matrix(points: np.ndarray, x: np.ndarray, h: float) -> np.ndarray:
    return stats.norm.pdf((np.asarray(x)[:, None] - np.asarray(points)[None, :]) / h) / h


def kernel_sums(
    points: np.ndarray,
    h: float,
    weights: np.ndarray,
    x: np.ndarray | None = None,
    chunk_elements: int = KDE_CHUNK_ELEMENTS,
) -> np.ndarray:
    """
    Σ_i w_i K_h(x_r − x_i) for every evaluation point x_r (default: the points
    themselves). `weights` is a vector or one column per component. Rows are
    evaluated in blocks of about `chunk_elements` kernel values, so no full
    len(x)×n matrix is held.
    """
    pts = np.asarray(points, dtype=float)
    xs = pts if x is None else np.atleast_1d(np.asarray(x, dtype=float))
    w = np.asarray(weights, dtype=float)
    rows = max(1, chunk_elements // max(pts.size, 1))
    out = np.empty((xs.size,) + w.shape[1:])
    for start in range(0, xs.size, rows):
        out[start : start + rows] = _kernel_matrix(pts, xs[start : start + rows], h) @ w
    return out


def kde_eval(points: np.ndarray, weights: np.ndarray, h: float, x: float | np.ndarray) -> float | np.ndarray:
    """Weighted Gaussian KDE Σ_i w_i K_h(x − x_i) / Σ_i w_i, scalar or vector `x`."""
    w = np.asarray(weights, dtype=float)
    if h <= 0:
        raise DataError(f"bandwidth must be > 0, got {h}")
    if np.any(w < 0):
        raise DataError("kernel weights must be non-negative")
    total = float(w.sum())
    if total <= 0:
        raise DataError("kernel weights sum to zero")
    scalar = np.ndim(x) == 0
    values = kernel_sums(points, h, w, np.atleast_1d(x)) / total
    return float(values[0]) if scalar else values


@dataclass(frozen=True, eq=False)
class KernelComponent:
    """Estimated class-conditional density of one (component, variable) pair."""

    points: np.ndarray
    weights: np.ndarray
    h: float

    def __call__(self, x: float | np.ndarray) -> float | np.ndarray:
        return kde_eval(self.points, self.weights, self.h, x)


@dataclass(frozen=True, eq=False)
class RefinedBlock:
    responsibilities: np.ndarray
    partition: np.ndarray
    pi: np.ndarray
    bandwidths: tuple[float, ...]
    n_iterations: int
    converged: bool
    trace: tuple[float, ...]

    def components(self, block_columns: np.ndarray) -> list[list[KernelComponent]]:
        """Final densities as callables, indexed [g][k] for the k-th continuous column."""
        cols = np.asarray(block_columns, dtype=float)
        return [
            [KernelComponent(cols[:, k], self.responsibilities[:, g], h) for k, h in enumerate(self.bandwidths)]
            for g in range(self.responsibilities.shape[1])
        ]


def refine_block(
    block_columns: np.ndarray,
    G_b: int,
    init_resp: np.ndarray,
    max_iter: int = DEFAULT_REFINE_MAX_ITERATIONS,
    tol: float = DEFAULT_REFINE_TOLERANCE,
    fixed_log_terms: np.ndarray | None = None,
    epsilon: float = 1e-6,
    chunk_elements: int = KDE_CHUNK_ELEMENTS,
) -> RefinedBlock:
    """
    Kernel EM for one block with (G_b, Ω_b) fixed.

    `block_columns` holds the block's continuous columns (n×m). `fixed_log_terms`
    (n×G_b) adds class-conditional log-probabilities that are not refitted,
    e.g. the block's categorical variables. Kernel matrices larger than
    `chunk_elements` values are never held; their products are formed in row blocks.
    """
    cols = np.asarray(block_columns, dtype=float)
    if cols.ndim == 1:
        cols = cols[:, None]
    n, m = cols.shape
    t = np.array(init_resp, dtype=float)
    if t.shape != (n, G_b):
        raise DataError(f"initial responsibilities have shape {t.shape}, expected {(n, G_b)}")
    if G_b == 1:
        ones = np.ones((n, 1))
        return RefinedBlock(ones, np.zeros(n, dtype=np.intp), np.ones(1), tuple(), 0, True, ())

    extra = np.zeros((n, G_b)) if fixed_log_terms is None else np.asarray(fixed_log_terms, dtype=float)
    hs = tuple(bandwidth(cols[:, k]) for k in range(m))
    # n×n kernel matrices are cached only while they fit the chunk budget
    kernels = [_kernel_matrix(cols[:, k], cols[:, k], h) if n * n <= chunk_elements else None for k, h in enumerate(hs)]

    def smooth(k: int, w: np.ndarray) -> np.ndarray:
        K = kernels[k]
        return K @ w if K is not None else kernel_sums(cols[:, k], hs[k], w, chunk_elements=chunk_elements)

    pooled = [smooth(k, np.full(n, 1.0 / n)) for k in range(m)]

    trace: list[float] = []
    converged = False
    pi = t.mean(axis=0)
    iteration = 0
    for iteration in range(1, max_iter + 1):
        weight = t.sum(axis=0)
        empty = weight < EMPTY_COMPONENT_WEIGHT
        pi = np.where(empty, epsilon, weight / n)
        pi = pi / pi.sum()
        logits = np.log(pi)[None, :] + extra
        safe = np.where(empty, 1.0, weight)
        for k, fallback in enumerate(pooled):
            dens = smooth(k, t) / safe[None, :]
            dens[:, empty] = fallback[:, None]
            logits = logits + np.log(np.maximum(dens, _TINY))
        norm = logsumexp(logits, axis=1, keepdims=True)
        t = np.exp(logits - norm)
        current = float(np.sum(norm))
        if trace and abs(current - trace[-1]) <= tol * abs(trace[-1]):
            trace.append(current)
            converged = True
            break
        trace.append(current)

    return RefinedBlock(
        responsibilities=t,
        partition=np.argmax(t, axis=1),
        pi=pi,
        bandwidths=hs,
        n_iterations=iteration,
        converged=converged,
        trace=tuple(trace),
    )


@dataclass(frozen=True, eq=False)
class RefinementResult:
    blocks: tuple[RefinedBlock, ...]

    @property
    def responsibilities(self) -> Responsibilities:
        return Responsibilities(tuple(b.responsibilities for b in self.blocks))

    @property
    def partitions(self) -> PartitionSet:
        return PartitionSet(tuple(b.partition for b in self.blocks))


def _categorical_log_terms(data: Dataset, fit: FitResult, b: int) -> np.ndarray:
    out = np.zeros((data.n, fit.structure.G[b]))
    for j in fit.structure.block_variables(b):
        if not data.is_continuous(j):
            codes = data.values[:, j].astype(np.intp) - 1
            out += np.log(fit.params.alpha[j])[:, codes].T
    return out


def _refine_one(data: Dataset, fit: FitResult, b: int, max_iter: int, tol: float) -> RefinedBlock:
    variables = fit.structure.block_variables(b)
    continuous = [j for j in variables if data.is_continuous(j)]
    t0 = fit.responsibilities.t[b]
    G_b = fit.structure.G[b]
    if not continuous:
        # nothing to smooth: keep the discretized posterior
        return RefinedBlock(np.array(t0), np.argmax(t0, axis=1), np.array(fit.params.pi[b]), (), 0, True, ())
    out = refine_block(
        data.values[:, continuous],
        G_b,
        t0,
        max_iter=max_iter,
        tol=tol,
        fixed_log_terms=_categorical_log_terms(data, fit, b),
        epsilon=fit.params.epsilon,
    )
    logger.debug("refined block %d: %d iterations, converged=%s", b + 1, out.n_iterations, out.converged)
    return out


def refine_fit(
    data: Dataset,
    fit: FitResult,
    max_iter: int = DEFAULT_REFINE_MAX_ITERATIONS,
    tol: float = DEFAULT_REFINE_TOLERANCE,
    n_jobs: int = 1,
) -> RefinementResult:
    """Refine every block of a selected model; the structure itself is untouched."""
    if data.d != fit.structure.d or data.n != fit.n_obs:
        raise DataError(
            f"data is {data.n}×{data.d}, the fit describes {fit.n_obs}×{fit.structure.d}"
        )
    blocks = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_refine_one)(data, fit, b, max_iter, tol) for b in range(fit.structure.B)
    )
    if not all(math.isfinite(x) for blk in blocks for x in blk.trace):
        logger.warning("refinement produced a non-finite objective")
    return RefinementResult(tuple(blocks))
