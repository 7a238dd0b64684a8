"""Boxplots of sweep summaries (one box per scenario, over replicates)."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence

import matplotlib as mpl

mpl.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from .errors import DataError  # noqa: E402
from .storage import SUMMARY_COLUMNS  # noqa: E402

logger = logging.getLogger(__name__)

mpl.rcParams.update(
    {
        "font.family": "serif",
        "font.size": 9,
        "axes.labelsize": 9,
        "legend.fontsize": 8,
        "xtick.labelsize": 8,
        "ytick.labelsize": 8,
        "savefig.dpi": 150,
    }
)

METRIC_LABELS = {"block_ari": "ARI of the variable blocks", "mean_ari": "mean ARI of the partitions"}
HUE_LABELS = {"bins_exponent": "k", "target_miscl": "misclassification"}
BY_BINS_RATE = 0.05
BY_RATE_EXPONENT = 6


def size(scale: float, nrows: int = 1, ncols: int = 1) -> tuple[float, float]:
    width = 6.3 * scale * max(1.0, ncols / 2)
    golden = (np.sqrt(5.0) - 1.0) / 2.0
    return width, width * golden * nrows / max(ncols, 1) * 1.4


def save(fig: plt.Figure, stem: Path) -> list[Path]:
    stem.parent.mkdir(parents=True, exist_ok=True)
    out = []
    for ext in ("png", "pdf"):
        p = stem.with_suffix(f".{ext}")
        fig.savefig(p, bbox_inches="tight")
        out.append(p)
    plt.close(fig)
    logger.info("wrote %s.{png,pdf}", stem)
    return out


def load_summary(path: str | Path) -> pd.DataFrame:
    p = Path(path)
    try:
        frame = pd.read_csv(p)
    except FileNotFoundError as e:
        raise DataError(f"missing summary file: {p}") from e
    missing = [c for c in SUMMARY_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"{p} lacks summary columns: {', '.join(missing)}")
    return frame


def _grouped_boxes(ax: plt.Axes, frame: pd.DataFrame, metric: str, hue: str, sizes: Sequence[int], hues: Sequence) -> None:
    width = 0.8 / max(len(hues), 1)
    cmap = plt.get_cmap("viridis", max(len(hues), 2))
    for h, level in enumerate(hues):
        sub = frame[frame[hue] == level]
        data = [sub.loc[sub["n"] == n, metric].dropna().to_numpy() for n in sizes]
        positions = [i - 0.4 + width * (h + 0.5) for i in range(len(sizes))]
        keep = [(d, p) for d, p in zip(data, positions) if d.size]
        if not keep:
            continue
        parts = ax.boxplot(
            [d for d, _ in keep],
            positions=[p for _, p in keep],
            widths=width * 0.9,
            patch_artist=True,
            manage_ticks=False,
            flierprops={"markersize": 2},
        )
        for box in parts["boxes"]:
            box.set_facecolor(cmap(h))
            box.set_alpha(0.8)
        ax.plot([], [], "s", color=cmap(h), label=f"{HUE_LABELS[hue]}={level:g}")
    ax.set_xticks(range(len(sizes)))
    ax.set_xticklabels([str(n) for n in sizes])
    ax.set_ylim(-0.05, 1.05)


def facet_boxplot(frame: pd.DataFrame, metric: str, hue: str, title: str) -> plt.Figure:
    """Rows: block size. Columns: noise family. x: sample size. Boxes coloured by `hue`."""
    block_sizes = sorted(frame["block_size"].unique())
    noises = sorted(frame["noise"].unique())
    sizes = sorted(frame["n"].unique())
    hues = sorted(frame[hue].unique())
    nrows, ncols = len(block_sizes), len(noises)
    fig, axes = plt.subplots(nrows, ncols, figsize=size(0.9, nrows, ncols), sharey=True, squeeze=False)
    for r, p in enumerate(block_sizes):
        for c, noise in enumerate(noises):
            ax = axes[r][c]
            cell = frame[(frame["block_size"] == p) & (frame["noise"] == noise)]
            _grouped_boxes(ax, cell, metric, hue, sizes, hues)
            if r == 0:
                ax.set_title(noise)
            if c == 0:
                ax.set_ylabel(f"|block| = {p}")
            if r == nrows - 1:
                ax.set_xlabel("n")
    axes[0][-1].legend(loc="lower right", frameon=False)
    fig.suptitle(title)
    return fig


def plot_summary(summary_csv: str | Path, out_dir: str | Path) -> list[Path]:
    """
    Two views per metric: boxes by bin exponent at 5% misclassification, and
    by misclassification rate at k = 6. A view with no matching rows is skipped.
    """
    frame = load_summary(summary_csv)
    out_dir = Path(out_dir)
    written: list[Path] = []
    views = (
        ("bins", "bins_exponent", np.isclose(frame["target_miscl"], BY_BINS_RATE), f"{BY_BINS_RATE:.0%} misclassification"),
        ("rate", "target_miscl", frame["bins_exponent"] == BY_RATE_EXPONENT, f"k = {BY_RATE_EXPONENT}"),
    )
    for metric, label in METRIC_LABELS.items():
        for name, hue, mask, subtitle in views:
            sub = frame[mask]
            if sub.empty:
                logger.info("no rows for the %s view of %s, skipped", name, metric)
                continue
            fig = facet_boxplot(sub, metric, hue, f"{label} ({subtitle})")
            written += save(fig, out_dir / f"{metric}_by_{name}")
    if not written:
        raise DataError(f"{summary_csv} has no rows to plot")
    return written
