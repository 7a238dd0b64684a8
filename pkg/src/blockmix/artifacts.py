"""
On-disk formats.

Data matrices are CSV (header row, one observation per row, floats written
with 17 significant digits so they read back bit for bit). Everything else is
JSON described by the pydantic documents below; `blockmix schema <kind>` prints
their JSON schema. Indices on disk are 1-based (ω, cluster labels, levels).

A fit document carries the bin boundaries next to π and α, so it can be
reloaded and applied to new rows without the original data.
"""

from __future__ import annotations

import json
import logging
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Literal, Sequence, TypeVar

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError

from . import __version__
from .binning import discretize
from .constants import ColumnKind, NoiseFamily
from .errors import ArtifactError, DataError
from .evaluation import EvaluationReport
from .models import (
    BinningScheme,
    CandidateSummary,
    Dataset,
    DiscreteParameters,
    FitResult,
    ModelStructure,
    PartitionSet,
    VariableBins,
)
from .refinement import RefinementResult
from .selection import e_step
from .simulation import LabeledSample, SimulationConfig
from .structure import map_partition

logger = logging.getLogger(__name__)

Doc = TypeVar("Doc", bound=BaseModel)


# ---------- documents -------------------------------------------------------


class RunInfo(BaseModel):
    tool_version: str = __version__
    master_seed: int
    config: dict[str, Any] = Field(default_factory=dict)
    created_at: str = ""
    wall_clock_seconds: float = 0.0


class StructureDoc(BaseModel):
    B: int
    G: list[int]
    omega: list[int]


class VariableBinsDoc(BaseModel):
    name: str
    kind: ColumnKind
    n_levels: int
    measures: list[float]
    boundaries: list[float] | None = None


class CandidateDoc(BaseModel):
    B: int
    G: list[int]
    best_penalized_loglik: float
    best_restart: int
    selected_structure: StructureDoc
    admissible: bool


class FitDocument(BaseModel):
    kind: Literal["fit"] = "fit"
    run: RunInfo
    structure: StructureDoc
    variables: list[VariableBinsDoc]
    pi: list[list[float]]
    alpha: list[list[list[float]]]
    epsilon: float
    loglik: float
    penalty: float
    penalized_loglik: float
    n_obs: int
    n_iterations: int
    converged: bool
    trace: list[float]
    candidates: list[CandidateDoc]
    map_partitions: list[list[int]]


class SimulationDoc(BaseModel):
    B: int
    G: list[int]
    block_size: int
    n: int
    noise: NoiseFamily
    tau: float | None = None
    target_miscl: float | None = None
    seed: int


class TruthDocument(BaseModel):
    kind: Literal["truth"] = "truth"
    run: RunInfo
    simulation: SimulationDoc
    tau_used: float
    true_omega: list[int]
    true_partitions: list[list[int]]


class RefinedBlockDoc(BaseModel):
    partition: list[int]
    pi: list[float]
    bandwidths: list[float]
    n_iterations: int
    converged: bool
    responsibilities: list[list[float]]


class RefinementDocument(BaseModel):
    kind: Literal["refinement"] = "refinement"
    run: RunInfo
    structure: StructureDoc
    blocks: list[RefinedBlockDoc]


class ReportBody(BaseModel):
    block_ari: float
    per_block_ari: list[float]
    mean_individual_ari: float
    structure_match: bool
    matching: list[int | None]


class ReportDocument(BaseModel):
    kind: Literal["report"] = "report"
    run: RunInfo
    selected_B: int
    selected_G: list[int]
    discretized: ReportBody
    refined: ReportBody | None = None


class ReplicateEntry(BaseModel):
    index: int
    seed: int
    directory: str
    status: Literal["incomplete", "complete", "failed"] = "incomplete"
    error: str | None = None


class Manifest(BaseModel):
    kind: Literal["manifest"] = "manifest"
    run: RunInfo
    replicates: list[ReplicateEntry]

    @property
    def complete(self) -> bool:
        return all(r.status == "complete" for r in self.replicates)


DOCUMENT_KINDS: dict[str, type[BaseModel]] = {
    "fit": FitDocument,
    "truth": TruthDocument,
    "refinement": RefinementDocument,
    "report": ReportDocument,
    "manifest": Manifest,
}


# ---------- run info ----------------------------------------------------------


class RunClock:
    """Stamps documents with creation time and elapsed wall-clock seconds."""

    def __init__(self, master_seed: int, config: dict[str, Any] | None = None):
        self.master_seed = master_seed
        self.config = config or {}
        self._start = time.perf_counter()

    def info(self) -> RunInfo:
        return RunInfo(
            master_seed=self.master_seed,
            config=self.config,
            created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            wall_clock_seconds=round(time.perf_counter() - self._start, 3),
        )


# ---------- JSON I/O ----------------------------------------------------------


def write_document(doc: BaseModel, path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(doc.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info("wrote %s", p)
    return p


def read_document(path: str | Path, model: type[Doc]) -> Doc:
    p = Path(path)
    try:
        return model.model_validate_json(p.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ArtifactError(f"missing file: {p}") from e
    except (OSError, ValidationError, json.JSONDecodeError) as e:
        raise ArtifactError(f"{p} is not a valid {model.__name__}: {e}") from e


def document_schema(kind: str) -> dict[str, Any]:
    if kind not in DOCUMENT_KINDS:
        raise ArtifactError(f"unknown document kind {kind!r} (options: {', '.join(DOCUMENT_KINDS)})")
    return DOCUMENT_KINDS[kind].model_json_schema()


# ---------- CSV -------------------------------------------------------------


def _looks_categorical(col: pd.Series, max_levels: int) -> bool:
    values = col.to_numpy(dtype=float)
    return bool(np.all(values == np.round(values))) and np.unique(values).size <= max_levels


def read_dataset(
    path: str | Path,
    categorical: Sequence[str] = (),
    infer_categorical: bool = False,
    max_levels: int | Callable[[int], int] = 10,
    remap_levels: bool = True,
) -> Dataset:
    """
    Load a CSV with a header row. Columns named in `categorical` hold integer
    level codes; with `infer_categorical`, integer-valued columns with at most
    `max_levels` distinct values are categorical too (a callable receives the
    row count and returns that limit). Codes are remapped to
    1..L_j in increasing order unless `remap_levels` is off, in which case they
    must already be 1-based level codes (as when applying a stored fit).
    """
    p = Path(path)
    try:
        frame = pd.read_csv(p, float_precision="round_trip")
    except FileNotFoundError as e:
        raise DataError(f"missing data file: {p}") from e
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"cannot read {p}: {e}") from e
    unknown = [c for c in categorical if c not in frame.columns]
    if unknown:
        raise DataError(f"--categorical names unknown columns: {', '.join(unknown)}")
    if frame.isna().any().any():
        raise DataError(f"{p} has missing values")
    try:
        numeric = frame.apply(pd.to_numeric)
    except (ValueError, TypeError) as e:
        raise DataError(f"{p} has non-numeric entries: {e}") from e

    limit = max_levels(len(numeric)) if callable(max_levels) else max_levels
    kinds: list[ColumnKind] = []
    levels: list[int | None] = []
    values = numeric.to_numpy(dtype=float).copy()
    for j, name in enumerate(numeric.columns):
        col = numeric[name]
        is_cat = name in categorical or (infer_categorical and _looks_categorical(col, limit))
        if not is_cat:
            kinds.append(ColumnKind.CONTINUOUS)
            levels.append(None)
            continue
        if not np.all(values[:, j] == np.round(values[:, j])):
            raise DataError(f"categorical column {name!r} holds non-integer values")
        if remap_levels:
            uniq, codes = np.unique(values[:, j], return_inverse=True)
            values[:, j] = codes + 1
            n_levels = int(uniq.size)
        else:
            if values[:, j].min() < 1:
                raise DataError(f"categorical column {name!r} has codes below 1")
            n_levels = int(values[:, j].max())
        kinds.append(ColumnKind.CATEGORICAL)
        levels.append(n_levels)
    return Dataset(values=values, column_kinds=tuple(kinds), n_levels=tuple(levels), column_names=tuple(map(str, numeric.columns)))


def write_dataset(data: Dataset, path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(data.values, columns=list(data.column_names))
    for j, name in enumerate(data.column_names):
        if not data.is_continuous(j):
            frame[name] = frame[name].astype(np.int64)
    frame.to_csv(p, index=False, float_format="%.17g")
    logger.info("wrote %s", p)
    return p


# ---------- conversions -----------------------------------------------------


def _structure_doc(s: ModelStructure) -> StructureDoc:
    return StructureDoc(B=s.B, G=list(s.G), omega=[b + 1 for b in s.omega])


def _structure_from_doc(doc: StructureDoc) -> ModelStructure:
    try:
        return ModelStructure(B=doc.B, G=tuple(doc.G), omega=tuple(b - 1 for b in doc.omega))
    except DataError as e:
        raise ArtifactError(f"invalid structure in result file: {e}") from e


def _labels_doc(p: PartitionSet) -> list[list[int]]:
    return [[int(x) + 1 for x in labels] for labels in p.labels]


def _labels_from_doc(rows: list[list[int]]) -> PartitionSet:
    return PartitionSet(tuple(np.asarray(r, dtype=np.intp) - 1 for r in rows))


def scheme_to_docs(scheme: BinningScheme, names: Sequence[str]) -> list[VariableBinsDoc]:
    return [
        VariableBinsDoc(
            name=name,
            kind=v.kind,
            n_levels=v.n_levels,
            measures=v.measures.tolist(),
            boundaries=None if v.boundaries is None else v.boundaries.tolist(),
        )
        for name, v in zip(names, scheme.variables)
    ]


def scheme_from_docs(docs: Sequence[VariableBinsDoc]) -> BinningScheme:
    try:
        return BinningScheme(
            tuple(
                VariableBins(
                    kind=v.kind,
                    n_levels=v.n_levels,
                    measures=np.asarray(v.measures),
                    boundaries=None if v.boundaries is None else np.asarray(v.boundaries),
                )
                for v in docs
            )
        )
    except DataError as e:
        raise ArtifactError(f"invalid binning scheme in result file: {e}") from e


def fit_to_document(fit: FitResult, scheme: BinningScheme, names: Sequence[str], run: RunInfo) -> FitDocument:
    return FitDocument(
        run=run,
        structure=_structure_doc(fit.structure),
        variables=scheme_to_docs(scheme, names),
        pi=[p.tolist() for p in fit.params.pi],
        alpha=[a.tolist() for a in fit.params.alpha],
        epsilon=fit.params.epsilon,
        loglik=fit.loglik,
        penalty=fit.penalty,
        penalized_loglik=fit.penalized_loglik,
        n_obs=fit.n_obs,
        n_iterations=fit.n_iterations,
        converged=fit.converged,
        trace=list(fit.trace),
        candidates=[
            CandidateDoc(
                B=c.B,
                G=list(c.G),
                best_penalized_loglik=c.best_penalized_loglik,
                best_restart=c.best_restart,
                selected_structure=_structure_doc(c.selected_structure),
                admissible=c.admissible,
            )
            for c in fit.candidates
        ],
        map_partitions=_labels_doc(fit.map_partitions),
    )


def parameters_from_document(doc: FitDocument) -> tuple[ModelStructure, DiscreteParameters, BinningScheme]:
    structure = _structure_from_doc(doc.structure)
    params = DiscreteParameters(
        pi=tuple(np.asarray(p) for p in doc.pi),
        alpha=tuple(np.asarray(a) for a in doc.alpha),
        epsilon=doc.epsilon,
    )
    scheme = scheme_from_docs(doc.variables)
    if scheme.d != structure.d or len(params.alpha) != structure.d:
        raise ArtifactError("fit document: structure, bins and alpha disagree on d")
    return structure, params, scheme


def fit_from_document(doc: FitDocument, data: Dataset) -> tuple[FitResult, BinningScheme]:
    """Rebuild a FitResult; responsibilities are recomputed from the stored parameters."""
    structure, params, scheme = parameters_from_document(doc)
    if data.d != structure.d or data.n != doc.n_obs:
        raise ArtifactError(f"data is {data.n}×{data.d}, the fit was made on {doc.n_obs}×{structure.d}")
    disc = discretize(data, scheme)
    resp = e_step(disc, structure, params)
    candidates = tuple(
        CandidateSummary(
            B=c.B,
            G=tuple(c.G),
            best_penalized_loglik=c.best_penalized_loglik,
            best_restart=c.best_restart,
            selected_structure=_structure_from_doc(c.selected_structure),
            admissible=c.admissible,
        )
        for c in doc.candidates
    )
    fit = FitResult(
        structure=structure,
        params=params,
        penalized_loglik=doc.penalized_loglik,
        loglik=doc.loglik,
        penalty=doc.penalty,
        responsibilities=resp,
        map_partitions=map_partition(resp),
        n_iterations=doc.n_iterations,
        converged=doc.converged,
        n_levels=scheme.n_levels,
        n_obs=doc.n_obs,
        trace=tuple(doc.trace),
        candidates=candidates,
    )
    return fit, scheme


def truth_to_document(sample: LabeledSample, config: SimulationConfig, run: RunInfo) -> TruthDocument:
    return TruthDocument(
        run=run,
        simulation=SimulationDoc(
            B=config.B,
            G=list(config.G),
            block_size=config.block_size,
            n=config.n,
            noise=config.noise,
            tau=config.tau,
            target_miscl=config.target_miscl,
            seed=config.seed,
        ),
        tau_used=sample.tau_used,
        true_omega=[b + 1 for b in sample.true_omega],
        true_partitions=_labels_doc(sample.true_partitions),
    )


def truth_from_document(doc: TruthDocument, data: Dataset) -> LabeledSample:
    s = doc.simulation
    if len(doc.true_omega) != data.d or any(len(p) != data.n for p in doc.true_partitions):
        raise ArtifactError(f"truth describes other data than the {data.n}×{data.d} matrix given")
    config = SimulationConfig(
        B=s.B, G=tuple(s.G), block_size=s.block_size, n=s.n, noise=s.noise, tau=doc.tau_used, seed=s.seed
    )
    return LabeledSample(
        data=data,
        true_omega=tuple(b - 1 for b in doc.true_omega),
        true_partitions=_labels_from_doc(doc.true_partitions),
        tau_used=doc.tau_used,
        config=config,
    )


def refinement_to_document(result: RefinementResult, structure: ModelStructure, run: RunInfo) -> RefinementDocument:
    return RefinementDocument(
        run=run,
        structure=_structure_doc(structure),
        blocks=[
            RefinedBlockDoc(
                partition=[int(x) + 1 for x in blk.partition],
                pi=np.asarray(blk.pi).tolist(),
                bandwidths=list(blk.bandwidths),
                n_iterations=blk.n_iterations,
                converged=blk.converged,
                responsibilities=np.asarray(blk.responsibilities).tolist(),
            )
            for blk in result.blocks
        ],
    )


def refined_partitions(doc: RefinementDocument) -> PartitionSet:
    return _labels_from_doc([b.partition for b in doc.blocks])


def report_body(report: EvaluationReport) -> ReportBody:
    return ReportBody(
        block_ari=report.block_ari,
        per_block_ari=list(report.per_block_ari),
        mean_individual_ari=report.mean_individual_ari,
        structure_match=report.structure_match,
        matching=[None if m is None else m + 1 for m in report.matching],
    )
