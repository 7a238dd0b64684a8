from __future__ import annotations

import sqlite3
from dataclasses import asdict, dataclass, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

import pandas as pd

from .constants import NoiseFamily


@dataclass(frozen=True)
class ReplicateScore:
    scenario: str
    n: int
    noise: str
    block_size: int
    bins_exponent: int
    target_miscl: float
    replicate: int
    seed: int
    block_ari: float
    mean_ari: float
    refined_mean_ari: float | None
    selected_B: int
    selected_G: str
    structure_match: bool


SUMMARY_COLUMNS: tuple[str, ...] = tuple(f.name for f in fields(ReplicateScore))


def scenario_key(n: int, noise: NoiseFamily | str, block_size: int, bins_exponent: int, target_miscl: float) -> str:
    return f"n{n}-{NoiseFamily(noise).value}-p{block_size}-k{bins_exponent}-m{target_miscl:g}"


def _connect(db_path: str | Path) -> sqlite3.Connection:
    conn = sqlite3.connect(str(db_path))
    conn.execute("PRAGMA journal_mode=WAL;")
    return conn


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def init_db(db_path: str | Path) -> None:
    Path(db_path).parent.mkdir(parents=True, exist_ok=True)
    with _connect(db_path) as conn:
        conn.execute(
            """
            CREATE TABLE IF NOT EXISTS replicate_scores (
              scenario TEXT NOT NULL,
              n INTEGER NOT NULL,
              noise TEXT NOT NULL,
              block_size INTEGER NOT NULL,
              bins_exponent INTEGER NOT NULL,
              target_miscl REAL NOT NULL,
              replicate INTEGER NOT NULL,
              seed INTEGER NOT NULL,
              block_ari REAL NOT NULL,
              mean_ari REAL NOT NULL,
              refined_mean_ari REAL,
              selected_B INTEGER NOT NULL,
              selected_G TEXT NOT NULL,
              structure_match INTEGER NOT NULL,
              inserted_at TEXT NOT NULL,
              PRIMARY KEY (scenario, replicate)
            )
            """
        )
        conn.execute(
            """
            CREATE TABLE IF NOT EXISTS tau_cache (
              noise TEXT NOT NULL,
              components INTEGER NOT NULL,
              block_size INTEGER NOT NULL,
              target_miscl REAL NOT NULL,
              tau REAL NOT NULL,
              inserted_at TEXT NOT NULL,
              PRIMARY KEY (noise, components, block_size, target_miscl)
            )
            """
        )


def upsert_scores(db_path: str | Path, scores: Iterable[ReplicateScore]) -> int:
    init_db(db_path)
    now = _now()
    rows = [
        (
            s.scenario, s.n, s.noise, s.block_size, s.bins_exponent, s.target_miscl, s.replicate, s.seed,
            s.block_ari, s.mean_ari, s.refined_mean_ari, s.selected_B, s.selected_G, int(s.structure_match), now,
        )
        for s in scores
    ]
    if not rows:
        return 0
    with _connect(db_path) as conn:
        cur = conn.executemany(
            """
            INSERT INTO replicate_scores
              (scenario, n, noise, block_size, bins_exponent, target_miscl, replicate, seed,
               block_ari, mean_ari, refined_mean_ari, selected_B, selected_G, structure_match, inserted_at)
            VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
            ON CONFLICT(scenario, replicate)
            DO UPDATE SET
              seed=excluded.seed,
              block_ari=excluded.block_ari,
              mean_ari=excluded.mean_ari,
              refined_mean_ari=excluded.refined_mean_ari,
              selected_B=excluded.selected_B,
              selected_G=excluded.selected_G,
              structure_match=excluded.structure_match,
              inserted_at=excluded.inserted_at
            """,
            rows,
        )
        return cur.rowcount


def list_scores(db_path: str | Path, scenario: str | None = None) -> list[ReplicateScore]:
    init_db(db_path)
    cols = ", ".join(SUMMARY_COLUMNS)
    with _connect(db_path) as conn:
        if scenario:
            rows = conn.execute(
                f"SELECT {cols} FROM replicate_scores WHERE scenario = ? ORDER BY scenario, replicate",
                (scenario,),
            ).fetchall()
        else:
            rows = conn.execute(f"SELECT {cols} FROM replicate_scores ORDER BY scenario, replicate").fetchall()
    out = []
    for row in rows:
        rec = dict(zip(SUMMARY_COLUMNS, row))
        rec["structure_match"] = bool(rec["structure_match"])
        out.append(ReplicateScore(**rec))
    return out


def scores_frame(scores: Iterable[ReplicateScore]) -> pd.DataFrame:
    return pd.DataFrame([asdict(s) for s in scores], columns=list(SUMMARY_COLUMNS))


def export_summary(db_path: str | Path, csv_path: str | Path) -> Path:
    """Tidy CSV: one row per (scenario, replicate)."""
    p = Path(csv_path)
    p.parent.mkdir(parents=True, exist_ok=True)
    scores_frame(list_scores(db_path)).to_csv(p, index=False)
    return p


def get_cached_tau(
    db_path: str | Path,
    noise: NoiseFamily,
    components: int,
    block_size: int,
    target_miscl: float,
) -> float | None:
    init_db(db_path)
    with _connect(db_path) as conn:
        row = conn.execute(
            """
            SELECT tau FROM tau_cache
            WHERE noise = ? AND components = ? AND block_size = ? AND target_miscl = ?
            """,
            (NoiseFamily(noise).value, components, block_size, target_miscl),
        ).fetchone()
    return None if row is None else float(row[0])


def upsert_cached_tau(
    db_path: str | Path,
    noise: NoiseFamily,
    components: int,
    block_size: int,
    target_miscl: float,
    tau: float,
) -> None:
    init_db(db_path)
    with _connect(db_path) as conn:
        conn.execute(
            """
            INSERT INTO tau_cache (noise, components, block_size, target_miscl, tau, inserted_at)
            VALUES (?, ?, ?, ?, ?, ?)
            ON CONFLICT(noise, components, block_size, target_miscl)
            DO UPDATE SET tau=excluded.tau, inserted_at=excluded.inserted_at
            """,
            (NoiseFamily(noise).value, components, block_size, target_miscl, tau, _now()),
        )
