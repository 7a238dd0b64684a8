from __future__ import annotations

import functools
import json
from pathlib import Path
from typing import Any, Callable, TypeVar

import typer
from rich.console import Console
from rich.table import Table

from . import __version__
from .artifacts import FitDocument, document_schema, read_document
from .config import CONFIG_TEMPLATE, RunConfig, load_run_config
from .constants import (
    ALL_NOISE_FAMILIES,
    SWEEP_BINS_EXPONENTS,
    SWEEP_BLOCK_SIZES,
    SWEEP_SAMPLE_SIZES,
    SWEEP_TARGET_RATES,
    ExitCode,
    NoiseFamily,
)
from .errors import ConfigError, DataError, NumericError
from .logs import configure_logging
from .pipeline import (
    FIT_FILE,
    LEDGER_FILE,
    REFINED_FILE,
    REPORT_FILE,
    SUMMARY_FILE,
    evaluate_to_file,
    predict_to_file,
    refine_to_file,
    replicate_seed,
    run_pipeline,
    run_sweep,
    select_to_file,
    simulate_to_files,
    summarize_directory,
)
from .plotting import plot_summary

app = typer.Typer(add_completion=False, help="Multiple-partitions clustering: bin, select blocks, refine, evaluate (CLI)")
console = Console()

F = TypeVar("F", bound=Callable[..., Any])

# ---------- shared options ----------------------------------------------------

OUT = typer.Option(Path("."), "--out", help="Output directory")
CONFIG = typer.Option(None, "--config", help="Run-config YAML (default: $BLOCKMIX_CONFIG_PATH)")
SEED = typer.Option(None, "--seed", help="Master seed")
THREADS = typer.Option(None, "--threads", help="Worker threads; results do not depend on it")
BMAX = typer.Option(None, "--bmax", help="Largest number of blocks tried")
GMAX = typer.Option(None, "--gmax", help="Largest number of components per block")
BINS = typer.Option(None, "--bins", help="Common number of bins R")
BINS_EXPONENT = typer.Option(None, "--bins-exponent", help="k in R = max(2, floor(n^(1/k)))")
RESTARTS = typer.Option(None, "--restarts", help="Random restarts per candidate")
MAX_ITER = typer.Option(None, "--max-iter", help="EM iteration cap")
TOL = typer.Option(None, "--tol", help="Relative-change stopping tolerance")
EPSILON = typer.Option(None, "--epsilon", help="Probability floor (default 1/(10 n R_max))")
CATEGORICAL = typer.Option(None, "--categorical", help="Comma-separated categorical column names")
INFER_CATEGORICAL = typer.Option(None, "--infer-categorical/--no-infer-categorical", help="Treat small integer columns as categorical")
NO_REFINE = typer.Option(False, "--no-refine", help="Skip the kernel refinement step")
BLOCKS = typer.Option(None, "--blocks", help="True number of blocks")
COMPONENTS = typer.Option(None, "--components", help="Components in every true block")
BLOCK_SIZE = typer.Option(None, "--block-size", help="Variables per true block")
N = typer.Option(None, "--n", help="Sample size")
NOISE = typer.Option(None, "--noise", help="gaussian | student3 | laplace")
TAU = typer.Option(None, "--tau", help="Shift magnitude (exclusive with --target-miscl)")
TARGET_MISCL = typer.Option(None, "--target-miscl", help="Bayes misclassification rate to calibrate τ for")
REPLICATES = typer.Option(1, "--replicates", min=1, help="Number of seeded replicates")


def _exit_codes(fn: F) -> F:
    """Print library errors in red and exit with their code."""

    @functools.wraps(fn)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return fn(*args, **kwargs)
        except ConfigError as e:
            console.print(f"[red]Invalid arguments[/red]: {e}")
            raise typer.Exit(code=ExitCode.INVALID_ARGUMENTS)
        except DataError as e:
            console.print(f"[red]Data error[/red]: {e}")
            raise typer.Exit(code=ExitCode.DATA_ERROR)
        except NumericError as e:
            console.print(f"[red]Numeric failure[/red]: {e}")
            raise typer.Exit(code=ExitCode.NUMERIC_FAILURE)

    return wrapper  # type: ignore[return-value]


def _exclusive(**flags: Any) -> None:
    given = [name for name, value in flags.items() if value is not None]
    if len(given) > 1:
        raise ConfigError(f"{' and '.join('--' + g.replace('_', '-') for g in given)} are mutually exclusive")


def _split(value: str | None) -> list[str] | None:
    if value is None:
        return None
    return [v.strip() for v in value.split(",") if v.strip()]


def _parse_list(value: str, cast: Callable[[str], Any], flag: str) -> list[Any]:
    try:
        return [cast(v) for v in _split(value) or []]
    except ValueError as e:
        raise typer.BadParameter(f"{flag}: {e}") from e


def _run_config(config: Path | None, **flags: Any) -> RunConfig:
    _exclusive(bins=flags.get("binning.bins"), bins_exponent=flags.get("binning.bins_exponent"))
    _exclusive(tau=flags.get("simulation.tau"), target_miscl=flags.get("simulation.target_miscl"))
    return load_run_config(config, flags)


@app.callback()
def main(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging"),
) -> None:
    configure_logging(verbose)


@app.command()
def version() -> None:
    console.print(__version__)


@app.command()
def init(
    out_dir: Path = OUT,
) -> None:
    """
    Generate a commented `blockmix.yaml` run-config template.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    p = out_dir / "blockmix.yaml"
    if p.exists():
        console.print(f"[yellow]Exists, left untouched[/yellow]: {p}")
        return
    p.write_text(CONFIG_TEMPLATE, encoding="utf-8")
    console.print(f"[green]Template generated: [/green]{p}")
    console.print("Next steps: edit it → `blockmix pipeline --config blockmix.yaml --out run/`")


@app.command()
@_exit_codes
def simulate(
    out: Path = OUT,
    blocks: int | None = BLOCKS,
    components: int | None = COMPONENTS,
    block_size: int | None = BLOCK_SIZE,
    n: int | None = N,
    noise: NoiseFamily | None = NOISE,
    tau: float | None = TAU,
    target_miscl: float | None = TARGET_MISCL,
    replicates: int = REPLICATES,
    seed: int | None = SEED,
    config: Path | None = CONFIG,
) -> None:
    """
    Draw a labelled sample: `data.csv` + `truth.json` (one `rep-XXX/` per replicate when --replicates > 1).
    """
    cfg = _run_config(
        config,
        **{
            "seed": seed,
            "simulation.blocks": blocks,
            "simulation.components": components,
            "simulation.block_size": block_size,
            "simulation.n": n,
            "simulation.noise": None if noise is None else noise.value,
            "simulation.tau": tau,
            "simulation.target_miscl": target_miscl,
        },
    )
    if replicates == 1:
        data_path, truth_path = simulate_to_files(cfg, out)
        console.print(f"[green]Simulated[/green]: {data_path}, {truth_path}")
        return
    for r in range(replicates):
        simulate_to_files(cfg, out / f"rep-{r:03d}", seed=replicate_seed(cfg.seed, r), ledger=out / LEDGER_FILE)
    console.print(f"[green]Simulated[/green]: {replicates} replicates → {out}")


@app.command()
@_exit_codes
def select(
    data: Path = typer.Argument(..., help="Input CSV with a header row"),
    out: Path = OUT,
    bmax: int | None = BMAX,
    gmax: int | None = GMAX,
    bins: int | None = BINS,
    bins_exponent: int | None = BINS_EXPONENT,
    restarts: int | None = RESTARTS,
    max_iter: int | None = MAX_ITER,
    tol: float | None = TOL,
    epsilon: float | None = EPSILON,
    categorical: str | None = CATEGORICAL,
    infer_categorical: bool | None = INFER_CATEGORICAL,
    seed: int | None = SEED,
    threads: int | None = THREADS,
    config: Path | None = CONFIG,
) -> None:
    """
    Bin the data and select the block structure by penalized likelihood; writes `fit.json`.
    """
    cfg = _run_config(
        config,
        **{
            "seed": seed,
            "threads": threads,
            "categorical": _split(categorical),
            "infer_categorical": infer_categorical,
            "binning.bins": bins,
            "binning.bins_exponent": bins_exponent,
            "selection.bmax": bmax,
            "selection.gmax": gmax,
            "selection.restarts": restarts,
            "selection.max_iter": max_iter,
            "selection.tol": tol,
            "selection.epsilon": epsilon,
        },
    )
    doc = select_to_file(data, cfg, out / FIT_FILE)
    _print_fit(doc)


@app.command()
@_exit_codes
def refine(
    data: Path = typer.Argument(..., help="The CSV the fit was made on"),
    fit: Path = typer.Option(..., "--fit", help="fit.json from `blockmix select`"),
    out: Path = OUT,
    max_iter: int | None = typer.Option(None, "--max-iter", help="Refinement iteration cap"),
    tol: float | None = typer.Option(None, "--tol", help="Refinement stopping tolerance"),
    threads: int | None = THREADS,
    config: Path | None = CONFIG,
) -> None:
    """
    Sharpen each block's partition with weighted kernel densities; writes `refined.json`.
    """
    cfg = _run_config(
        config,
        **{
            "threads": threads,
            "refinement.max_iter": max_iter,
            "refinement.tol": tol,
        },
    )
    refine_to_file(data, fit, cfg, out / REFINED_FILE)
    console.print(f"[green]Refined[/green]: {out / REFINED_FILE}")


@app.command()
@_exit_codes
def evaluate(
    data: Path | None = typer.Option(None, "--data", help="The CSV the fit was made on"),
    fit: Path | None = typer.Option(None, "--fit", help="fit.json"),
    truth: Path | None = typer.Option(None, "--truth", help="truth.json"),
    refined: Path | None = typer.Option(None, "--refined", help="Optional refined.json"),
    summary: Path | None = typer.Option(None, "--summary", help="Aggregate every report under this directory instead"),
    out: Path = OUT,
    config: Path | None = CONFIG,
) -> None:
    """
    Score a fit against the truth (`report.json`), or summarize a run directory into a tidy CSV.
    """
    if summary is not None:
        p = summarize_directory(summary, out / SUMMARY_FILE)
        console.print(f"[green]Summary written[/green]: {p}")
        return
    if data is None or fit is None or truth is None:
        raise typer.BadParameter("--data, --fit and --truth are required without --summary")
    cfg = _run_config(config)
    doc = evaluate_to_file(data, fit, truth, cfg, out / REPORT_FILE, refined)

    table = Table(title="Evaluation", show_lines=True)
    table.add_column("Partitions", style="cyan")
    table.add_column("Block ARI", style="white")
    table.add_column("Per-block ARI", style="white")
    table.add_column("Mean ARI", style="yellow")
    table.add_column("Structure match", style="white")
    for name, body in (("discretized", doc.discretized), ("refined", doc.refined)):
        if body is None:
            continue
        table.add_row(
            name,
            f"{body.block_ari:.3f}",
            ", ".join(f"{a:.3f}" for a in body.per_block_ari),
            f"{body.mean_individual_ari:.3f}",
            "yes" if body.structure_match else "no",
        )
    console.print(table)


@app.command()
@_exit_codes
def pipeline(
    out: Path = OUT,
    replicates: int = REPLICATES,
    blocks: int | None = BLOCKS,
    components: int | None = COMPONENTS,
    block_size: int | None = BLOCK_SIZE,
    n: int | None = N,
    noise: NoiseFamily | None = NOISE,
    tau: float | None = TAU,
    target_miscl: float | None = TARGET_MISCL,
    bmax: int | None = BMAX,
    gmax: int | None = GMAX,
    bins: int | None = BINS,
    bins_exponent: int | None = BINS_EXPONENT,
    restarts: int | None = RESTARTS,
    max_iter: int | None = MAX_ITER,
    tol: float | None = TOL,
    epsilon: float | None = EPSILON,
    no_refine: bool = NO_REFINE,
    seed: int | None = SEED,
    threads: int | None = THREADS,
    config: Path | None = CONFIG,
) -> None:
    """
    Simulate → select → refine → evaluate for each replicate; writes a bundle with `manifest.json`.
    """
    cfg = _run_config(
        config,
        **{
            "seed": seed,
            "threads": threads,
            "simulation.blocks": blocks,
            "simulation.components": components,
            "simulation.block_size": block_size,
            "simulation.n": n,
            "simulation.noise": None if noise is None else noise.value,
            "simulation.tau": tau,
            "simulation.target_miscl": target_miscl,
            "binning.bins": bins,
            "binning.bins_exponent": bins_exponent,
            "selection.bmax": bmax,
            "selection.gmax": gmax,
            "selection.restarts": restarts,
            "selection.max_iter": max_iter,
            "selection.tol": tol,
            "selection.epsilon": epsilon,
            "refinement.enabled": False if no_refine else None,
        },
    )
    manifest = run_pipeline(cfg, out, replicates)
    done = sum(r.status == "complete" for r in manifest.replicates)
    console.print(f"[green]Pipeline finished[/green]: {done}/{len(manifest.replicates)} replicates → {out}")


@app.command()
@_exit_codes
def sweep(
    out: Path = OUT,
    replicates: int = REPLICATES,
    sample_sizes: str = typer.Option(",".join(map(str, SWEEP_SAMPLE_SIZES)), "--sample-sizes", help="Comma-separated n values"),
    block_sizes: str = typer.Option(",".join(map(str, SWEEP_BLOCK_SIZES)), "--block-sizes", help="Comma-separated block sizes"),
    noises: str = typer.Option(",".join(f.value for f in ALL_NOISE_FAMILIES), "--noises", help="Comma-separated noise families"),
    rates: str = typer.Option(",".join(map(str, SWEEP_TARGET_RATES)), "--rates", help="Comma-separated target misclassification rates"),
    exponents: str = typer.Option(",".join(map(str, SWEEP_BINS_EXPONENTS)), "--exponents", help="Comma-separated bin exponents k"),
    restarts: int | None = RESTARTS,
    no_refine: bool = NO_REFINE,
    seed: int | None = SEED,
    threads: int | None = THREADS,
    config: Path | None = CONFIG,
) -> None:
    """
    Run the simulation grid, keep per-replicate scores in `ledger.sqlite3` and export `summary.csv`.
    """
    cfg = _run_config(
        config,
        **{
            "seed": seed,
            "threads": threads,
            "selection.restarts": restarts,
            "refinement.enabled": False if no_refine else None,
        },
    )
    p = run_sweep(
        cfg,
        out,
        replicates,
        sample_sizes=_parse_list(sample_sizes, int, "--sample-sizes"),
        block_sizes=_parse_list(block_sizes, int, "--block-sizes"),
        noises=_parse_list(noises, NoiseFamily, "--noises"),
        targets=_parse_list(rates, float, "--rates"),
        bins_exponents=_parse_list(exponents, int, "--exponents"),
    )
    console.print(f"[green]Sweep finished[/green]: {p}")


@app.command()
@_exit_codes
def plot(
    summary: Path = typer.Argument(..., help="summary.csv from `blockmix sweep` or `evaluate --summary`"),
    out: Path = OUT,
) -> None:
    """
    Boxplots of block ARI and mean partition ARI (PNG + PDF).
    """
    written = plot_summary(summary, out)
    for p in written:
        console.print(f"[green]Figure[/green]: {p}")


@app.command()
@_exit_codes
def predict(
    data: Path = typer.Argument(..., help="CSV of new rows with the fit's columns"),
    fit: Path = typer.Option(..., "--fit", help="fit.json"),
    out: Path = OUT,
) -> None:
    """
    Label new rows with a stored fit; writes `labels.csv` (one column per block).
    """
    p = predict_to_file(fit, data, out / "labels.csv")
    console.print(f"[green]Labels written[/green]: {p}")


@app.command()
@_exit_codes
def show(
    fit: Path = typer.Argument(..., help="fit.json"),
) -> None:
    """
    Show the selected structure and every candidate's best objective.
    """
    _print_fit(read_document(fit, FitDocument))


@app.command()
@_exit_codes
def schema(
    kind: str = typer.Argument(..., help="fit | truth | refinement | report | manifest"),
) -> None:
    """
    Print the JSON schema of a result document.
    """
    console.print_json(json.dumps(document_schema(kind)))


def _print_fit(doc: FitDocument) -> None:
    s = doc.structure
    console.print(
        f"[green]Selected[/green]: B={s.B}, G=({', '.join(map(str, s.G))}), "
        f"penalized log-likelihood {doc.penalized_loglik:.4f} "
        f"({doc.n_iterations} iterations, {'converged' if doc.converged else 'not converged'})"
    )
    names = [v.name for v in doc.variables]
    blocks = Table(title="Blocks", show_lines=True)
    blocks.add_column("Block", style="cyan")
    blocks.add_column("Components", style="white")
    blocks.add_column("Variables", style="white")
    for b in range(s.B):
        members = [names[j] for j, w in enumerate(s.omega) if w == b + 1]
        blocks.add_row(str(b + 1), str(s.G[b]), ", ".join(members))
    console.print(blocks)

    table = Table(title="Candidates", show_lines=True)
    table.add_column("B", style="cyan")
    table.add_column("G", style="cyan")
    table.add_column("Best objective", style="white")
    table.add_column("Restart", style="white")
    table.add_column("Fitted structure", style="white")
    table.add_column("Admissible", style="yellow")
    for c in doc.candidates:
        fitted = c.selected_structure
        table.add_row(
            str(c.B),
            ",".join(map(str, c.G)),
            f"{c.best_penalized_loglik:.4f}",
            str(c.best_restart + 1),
            f"B={fitted.B} G={','.join(map(str, fitted.G))}",
            "yes" if c.admissible else "no",
        )
    console.print(table)
