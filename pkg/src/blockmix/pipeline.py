"""
Orchestration shared by the CLI commands.

A replicate is simulate → select → refine → evaluate under one seed. The
bundle (`run_pipeline`) writes each replicate's artifacts plus a manifest that
is rewritten after every replicate, so an interrupted run shows which parts are
missing. The sweep (`run_sweep`) walks the simulation grid and only keeps
scores, in the SQLite ledger, from which the tidy summary is exported.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .artifacts import (
    FitDocument,
    Manifest,
    RefinementDocument,
    ReplicateEntry,
    ReportDocument,
    RunClock,
    TruthDocument,
    fit_from_document,
    fit_to_document,
    parameters_from_document,
    read_dataset,
    read_document,
    refined_partitions,
    refinement_to_document,
    report_body,
    truth_from_document,
    truth_to_document,
    write_dataset,
    write_document,
)
from .binning import build_scheme, discretize
from .config import RunConfig, _deep_update
from .constants import MIN_BLOCK_SIZE, ColumnKind, NoiseFamily
from .errors import BlockmixError, DataError
from .evaluation import EvaluationReport, matched_individual_ari
from .likelihood import PenaltySpec
from .models import BinningScheme, Dataset, FitResult, PartitionSet
from .refinement import RefinementResult, refine_fit
from .selection import predict, select_model
from .simulation import LabeledSample, SimulationConfig, generate, resolve_tau
from .storage import ReplicateScore, export_summary, get_cached_tau, scenario_key, upsert_cached_tau, upsert_scores

logger = logging.getLogger(__name__)

DATA_FILE = "data.csv"
TRUTH_FILE = "truth.json"
FIT_FILE = "fit.json"
REFINED_FILE = "refined.json"
REPORT_FILE = "report.json"
MANIFEST_FILE = "manifest.json"
LEDGER_FILE = "ledger.sqlite3"
SUMMARY_FILE = "summary.csv"


def replicate_seed(master_seed: int, replicate: int) -> int:
    return int(np.random.SeedSequence(master_seed, spawn_key=(replicate,)).generate_state(1)[0])


def config_dump(config: RunConfig) -> dict[str, Any]:
    # thread count never changes results, so it stays out of the artifacts
    return config.model_dump(mode="json", exclude={"threads"})


# ---------- single steps ------------------------------------------------------


def calibrated_simulation(config: RunConfig, ledger: Path | None = None, seed: int | None = None) -> SimulationConfig:
    """Simulation config with τ resolved, reusing the ledger's τ cache when given."""
    sim = config.simulation_config(seed)
    if sim.tau is not None or ledger is None:
        return resolve_tau(sim)
    target = float(sim.target_miscl)
    cached = get_cached_tau(ledger, sim.noise, sim.G[0], sim.block_size, target)
    if cached is None:
        cached = resolve_tau(sim).tau
        upsert_cached_tau(ledger, sim.noise, sim.G[0], sim.block_size, target, float(cached))
    return replace(sim, tau=float(cached), target_miscl=None)


def simulate(sim: SimulationConfig, seed: int | None = None) -> LabeledSample:
    return generate(sim, seed)


def select(data: Dataset, config: RunConfig, seed: int | None = None) -> tuple[FitResult, BinningScheme]:
    if data.d < MIN_BLOCK_SIZE:
        raise DataError(f"need at least {MIN_BLOCK_SIZE} variables, got d={data.d}")
    R = config.binning.num_bins(data.n)
    scheme = build_scheme(data, R)
    disc = discretize(data, scheme)
    grid = config.grid(data.d)
    logger.info("R=%d bins, %d candidate structures", R, len(grid.candidates))
    fit = select_model(disc, grid, config.em_config(seed), PenaltySpec.bic())
    logger.info("selected B=%d G=%s (penalized log-likelihood %.4f)", fit.structure.B, fit.structure.G, fit.penalized_loglik)
    return fit, scheme


def refine(data: Dataset, fit: FitResult, config: RunConfig) -> RefinementResult:
    r = config.refinement
    return refine_fit(data, fit, max_iter=r.max_iter, tol=r.tol, n_jobs=config.threads)


def evaluate(
    fit: FitResult,
    truth: LabeledSample,
    refined: PartitionSet | None,
    run_clock: RunClock,
) -> tuple[ReportDocument, EvaluationReport, EvaluationReport | None]:
    base = matched_individual_ari(fit, truth)
    sharp = matched_individual_ari(fit, truth, refined) if refined is not None else None
    doc = ReportDocument(
        run=run_clock.info(),
        selected_B=fit.structure.B,
        selected_G=list(fit.structure.G),
        discretized=report_body(base),
        refined=None if sharp is None else report_body(sharp),
    )
    return doc, base, sharp


# ---------- file-level commands ----------------------------------------------


def simulate_to_files(
    config: RunConfig,
    out_dir: Path,
    seed: int | None = None,
    ledger: Path | None = None,
) -> tuple[Path, Path]:
    clock = RunClock(config.seed if seed is None else seed, config_dump(config))
    requested = config.simulation_config(seed)
    sim = calibrated_simulation(config, ledger, seed)
    sample = simulate(sim)
    data_path = write_dataset(sample.data, out_dir / DATA_FILE)
    truth_path = write_document(truth_to_document(sample, requested, clock.info()), out_dir / TRUTH_FILE)
    return data_path, truth_path


def load_data(path: Path, config: RunConfig) -> Dataset:
    return read_dataset(
        path,
        categorical=config.categorical,
        infer_categorical=config.infer_categorical,
        max_levels=lambda n: max(10, config.binning.num_bins(max(n, 2))),
    )


def load_fitted_data(path: Path, doc: FitDocument) -> Dataset:
    """Re-read the data a fit was made on, with the column kinds the fit recorded."""
    categorical = [v.name for v in doc.variables if v.kind is ColumnKind.CATEGORICAL]
    data = read_dataset(path, categorical=categorical)
    expected = [v.name for v in doc.variables]
    if list(data.column_names) != expected:
        raise DataError(f"columns {list(data.column_names)} do not match the fit's {expected}")
    return data


def select_to_file(data_path: Path, config: RunConfig, out_path: Path) -> FitDocument:
    clock = RunClock(config.seed, config_dump(config))
    data = load_data(data_path, config)
    fit, scheme = select(data, config)
    doc = fit_to_document(fit, scheme, data.column_names, clock.info())
    write_document(doc, out_path)
    return doc


def refine_to_file(data_path: Path, fit_path: Path, config: RunConfig, out_path: Path) -> None:
    clock = RunClock(config.seed, config_dump(config))
    doc = read_document(fit_path, FitDocument)
    data = load_fitted_data(data_path, doc)
    fit, _ = fit_from_document(doc, data)
    result = refine(data, fit, config)
    write_document(refinement_to_document(result, fit.structure, clock.info()), out_path)


def evaluate_to_file(
    data_path: Path,
    fit_path: Path,
    truth_path: Path,
    config: RunConfig,
    out_path: Path,
    refined_path: Path | None = None,
) -> ReportDocument:
    clock = RunClock(config.seed, config_dump(config))
    fit_doc = read_document(fit_path, FitDocument)
    data = load_fitted_data(data_path, fit_doc)
    fit, _ = fit_from_document(fit_doc, data)
    truth = truth_from_document(read_document(truth_path, TruthDocument), data)
    refined = None
    if refined_path is not None:
        refined = refined_partitions(read_document(refined_path, RefinementDocument))
    doc, _, _ = evaluate(fit, truth, refined, clock)
    write_document(doc, out_path)
    return doc


def predict_to_file(fit_path: Path, data_path: Path, out_path: Path) -> Path:
    """
    Label new rows with a stored fit: bins come from the fit (out-of-range
    values fall in the extreme bins), categorical columns keep their codes.
    Writes one 1-based label column per block.
    """
    doc = read_document(fit_path, FitDocument)
    structure, params, scheme = parameters_from_document(doc)
    categorical = [v.name for v in doc.variables if v.kind is ColumnKind.CATEGORICAL]
    data = read_dataset(data_path, categorical=categorical, remap_levels=False)
    expected = [v.name for v in doc.variables]
    if list(data.column_names) != expected:
        raise DataError(f"columns {list(data.column_names)} do not match the fit's {expected}")
    labels = predict(discretize(data, scheme), structure, params)
    frame = pd.DataFrame({f"block{b + 1}": np.asarray(lab) + 1 for b, lab in enumerate(labels.labels)})
    out_path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out_path, index=False)
    logger.info("labelled %d rows into %s", data.n, out_path)
    return out_path


# ---------- replicates ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ReplicateOutcome:
    sample: LabeledSample
    fit: FitResult
    scheme: BinningScheme
    refined: RefinementResult | None
    report: EvaluationReport
    refined_report: EvaluationReport | None


def run_replicate(
    config: RunConfig,
    sim: SimulationConfig,
    seed: int,
    out_dir: Path | None = None,
    requested: SimulationConfig | None = None,
) -> ReplicateOutcome:
    """`requested` is the pre-calibration config recorded in truth.json; it defaults to `sim`."""
    clock = RunClock(seed, config_dump(config))
    sample = simulate(sim, seed)
    fit, scheme = select(sample.data, config, seed)
    refined = refine(sample.data, fit, config) if config.refinement.enabled else None
    doc, report, refined_report = evaluate(fit, sample, None if refined is None else refined.partitions, clock)
    if out_dir is not None:
        write_dataset(sample.data, out_dir / DATA_FILE)
        write_document(truth_to_document(sample, replace(requested or sim, seed=seed), clock.info()), out_dir / TRUTH_FILE)
        write_document(fit_to_document(fit, scheme, sample.data.column_names, clock.info()), out_dir / FIT_FILE)
        if refined is not None:
            write_document(refinement_to_document(refined, fit.structure, clock.info()), out_dir / REFINED_FILE)
        write_document(doc, out_dir / REPORT_FILE)
    return ReplicateOutcome(sample, fit, scheme, refined, report, refined_report)


def _guarded_replicate(
    config: RunConfig,
    sim: SimulationConfig,
    entry: ReplicateEntry,
    out_dir: Path,
    requested: SimulationConfig,
) -> BlockmixError | None:
    try:
        run_replicate(config, sim, entry.seed, out_dir / entry.directory, requested)
    except BlockmixError as e:
        return e
    return None


def run_pipeline(config: RunConfig, out_dir: Path, replicates: int = 1) -> Manifest:
    """
    Replicates run on `config.threads` threads (each then fits serially) and
    are reported in order; the first failure is re-raised once the manifest
    records it.
    """
    if replicates < 1:
        raise DataError(f"replicates must be >= 1, got {replicates}")
    clock = RunClock(config.seed, config_dump(config))
    requested = config.simulation_config()
    sim = calibrated_simulation(config, out_dir / LEDGER_FILE)
    entries = [
        ReplicateEntry(index=r, seed=replicate_seed(config.seed, r), directory=f"rep-{r:03d}")
        for r in range(replicates)
    ]
    manifest_path = out_dir / MANIFEST_FILE

    def flush() -> Manifest:
        manifest = Manifest(run=clock.info(), replicates=entries)
        write_document(manifest, manifest_path)
        return manifest

    flush()
    n_jobs = min(config.threads, replicates)
    inner = config if n_jobs == 1 else config.model_copy(update={"threads": 1})
    outcomes = Parallel(n_jobs=n_jobs, prefer="threads", return_as="generator")(
        delayed(_guarded_replicate)(inner, sim, entry, out_dir, requested) for entry in entries
    )
    failure = None
    for i, error in enumerate(outcomes):
        status = "complete" if error is None else "failed"
        entries[i] = entries[i].model_copy(update={"status": status, "error": None if error is None else str(error)})
        flush()
        if error is not None and failure is None:
            failure = error
    if failure is not None:
        raise failure
    return flush()


# ---------- sweep and summaries -------------------------------------------------


def _score(
    key: str,
    sim: SimulationConfig,
    bins_exponent: int,
    target: float,
    replicate: int,
    seed: int,
    outcome: ReplicateOutcome,
) -> ReplicateScore:
    return ReplicateScore(
        scenario=key,
        n=sim.n,
        noise=sim.noise.value,
        block_size=sim.block_size,
        bins_exponent=bins_exponent,
        target_miscl=target,
        replicate=replicate,
        seed=seed,
        block_ari=outcome.report.block_ari,
        mean_ari=outcome.report.mean_individual_ari,
        refined_mean_ari=None if outcome.refined_report is None else outcome.refined_report.mean_individual_ari,
        selected_B=outcome.fit.structure.B,
        selected_G=",".join(str(g) for g in outcome.fit.structure.G),
        structure_match=outcome.report.structure_match,
    )


def run_sweep(
    config: RunConfig,
    out_dir: Path,
    replicates: int,
    sample_sizes: Sequence[int],
    block_sizes: Sequence[int],
    noises: Sequence[NoiseFamily],
    targets: Sequence[float],
    bins_exponents: Sequence[int],
) -> Path:
    """
    Score every scenario of the grid. Replicate r uses the same seed in every
    scenario, so the bin-count policies are compared on the same samples.
    """
    ledger = out_dir / LEDGER_FILE
    scenarios = list(itertools.product(sample_sizes, noises, block_sizes, targets))
    logger.info("sweep: %d scenarios × %d bin policies × %d replicates", len(scenarios), len(bins_exponents), replicates)
    for n, noise, p, target in scenarios:
        base = RunConfig.model_validate(
            _deep_update(
                config.model_dump(mode="json"),
                {
                    "simulation.n": n,
                    "simulation.noise": NoiseFamily(noise).value,
                    "simulation.block_size": p,
                    "simulation.target_miscl": target,
                    "simulation.tau": None,
                },
            )
        )
        sim = calibrated_simulation(base, ledger)
        for k in bins_exponents:
            cfg = base.model_copy(update={"binning": base.binning.model_copy(update={"bins": None, "bins_exponent": k})})
            key = scenario_key(n, noise, p, k, target)
            scores = []
            for r in range(replicates):
                seed = replicate_seed(config.seed, r)
                outcome = run_replicate(cfg, sim, seed)
                scores.append(_score(key, sim, k, target, r, seed, outcome))
            upsert_scores(ledger, scores)
            logger.info(
                "%s: mean block ARI %.3f, mean individual ARI %.3f",
                key, float(np.mean([s.block_ari for s in scores])), float(np.mean([s.mean_ari for s in scores])),
            )
    return export_summary(ledger, out_dir / SUMMARY_FILE)


def _replicate_dirs(root: Path) -> Iterable[Path]:
    return sorted(p.parent for p in root.rglob(REPORT_FILE))


def summarize_directory(root: Path, out_csv: Path) -> Path:
    """Collect every replicate's report under `root` into the ledger and export the tidy CSV."""
    ledger = root / LEDGER_FILE
    scores = []
    counters: dict[str, int] = {}
    for rep in _replicate_dirs(root):
        report = read_document(rep / REPORT_FILE, ReportDocument)
        truth = read_document(rep / TRUTH_FILE, TruthDocument)
        fit = read_document(rep / FIT_FILE, FitDocument)
        binning = fit.run.config.get("binning", {})
        k = int(binning.get("bins_exponent") or 0)
        target = truth.simulation.target_miscl if truth.simulation.target_miscl is not None else 0.0
        key = scenario_key(truth.simulation.n, truth.simulation.noise, truth.simulation.block_size, k, target)
        i = counters.get(key, 0)
        counters[key] = i + 1
        scores.append(
            ReplicateScore(
                scenario=key,
                n=truth.simulation.n,
                noise=truth.simulation.noise.value,
                block_size=truth.simulation.block_size,
                bins_exponent=k,
                target_miscl=target,
                replicate=i,
                seed=report.run.master_seed,
                block_ari=report.discretized.block_ari,
                mean_ari=report.discretized.mean_individual_ari,
                refined_mean_ari=None if report.refined is None else report.refined.mean_individual_ari,
                selected_B=report.selected_B,
                selected_G=",".join(str(g) for g in report.selected_G),
                structure_match=report.discretized.structure_match,
            )
        )
    if not scores:
        raise DataError(f"no {REPORT_FILE} found under {root}")
    upsert_scores(ledger, scores)
    return export_summary(ledger, out_csv)
