"""City-day panel files, classified-text counting and share aggregation."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
import pandas as pd

from ..labels import EMOTIONS

COUNT_COLUMNS = ("total_texts", "pandemic_texts", *EMOTIONS)
COVARIATES = ("cases", "foreign", "risk", "distance", "pmedical", "pgovernment", "density")
PANEL_COLUMNS = ("city", "date", *COUNT_COLUMNS, *COVARIATES, "netout")
REQUIRED_COLUMNS = PANEL_COLUMNS[:-1]
INTEGER_COLUMNS = (*COUNT_COLUMNS, "cases", "foreign", "risk")


class PanelFormatError(ValueError):
    def __init__(self, message: str, column: str | None = None):
        super().__init__(message)
        self.column = column


@dataclass(frozen=True)
class ClassifiedText:
    city: str
    date: dt.date
    pandemic: bool
    emotion: int | None = None


def count_classified(texts: Iterable[ClassifiedText]) -> pd.DataFrame:
    """City-day counts of all texts, pandemic texts and per-emotion pandemic texts.

    Emotion labels are only counted for pandemic texts.
    """
    rows: dict[tuple[str, dt.date], np.ndarray] = {}
    for t in texts:
        r = rows.setdefault((t.city, t.date), np.zeros(len(COUNT_COLUMNS), dtype=np.int64))
        r[0] += 1
        if t.pandemic:
            r[1] += 1
            if t.emotion is not None:
                if not 0 <= t.emotion < len(EMOTIONS):
                    raise ValueError(f"emotion label {t.emotion} outside 0..{len(EMOTIONS) - 1}")
                r[2 + t.emotion] += 1
    keys = sorted(rows)
    frame = pd.DataFrame([rows[k] for k in keys], columns=list(COUNT_COLUMNS))
    frame.insert(0, "date", [k[1] for k in keys])
    frame.insert(0, "city", [k[0] for k in keys])
    return frame


def aggregate_shares(counts: pd.DataFrame) -> tuple[pd.DataFrame, list[str]]:
    """Add ``attention`` = pandemic/total and one share column per emotion
    (emotion count / pandemic count).

    Rows with no texts at all are dropped and reported; rows with no
    pandemic texts keep NaN emotion shares and ``emotion_missing`` True.
    """
    diagnostics = []
    W = counts["total_texts"].to_numpy()
    empty = W == 0
    for _, row in counts[empty].iterrows():
        diagnostics.append(f"{row['city']} {row['date']}: total_texts is 0; row rejected")
    out = counts.loc[~empty].copy()
    W = out["total_texts"].to_numpy(dtype=float)
    A = out["pandemic_texts"].to_numpy(dtype=float)
    if np.any(A > W):
        bad = out.loc[A > W].iloc[0]
        raise ValueError(f"{bad['city']} {bad['date']}: pandemic_texts exceeds total_texts")
    out["attention"] = A / W
    missing = A == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        for e in EMOTIONS:
            out[f"{e}_share"] = np.where(missing, np.nan, out[e].to_numpy(dtype=float) / np.where(missing, 1.0, A))
    out["emotion_missing"] = missing
    return out.reset_index(drop=True), diagnostics


def panel_diagnostics(frame: pd.DataFrame, first_line: int = 2) -> list[str]:
    """Problems in a raw panel table; line numbers assume a header on line 1."""
    diags = []
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        return [f"missing required column: {c}" for c in missing]
    seen: dict[tuple[str, str], int] = {}
    for i, (city, date) in enumerate(zip(frame["city"].astype(str), frame["date"].astype(str))):
        line = first_line + i
        if (city, date) in seen:
            diags.append(f"duplicate (city, date) = ({city}, {date}) on lines {seen[city, date]} and {line}")
        else:
            seen[city, date] = line
    for c in INTEGER_COLUMNS:
        vals = pd.to_numeric(frame[c], errors="coerce")
        for i in np.flatnonzero(vals.isna().to_numpy() | (vals.to_numpy() < 0) | (vals.to_numpy() % 1 != 0)):
            diags.append(f"line {first_line + i}: {c} must be a non-negative integer, got {frame[c].iloc[i]!r}")
    if not diags:
        W, A = frame["total_texts"].astype(int).to_numpy(), frame["pandemic_texts"].astype(int).to_numpy()
        E = frame[list(EMOTIONS)].astype(int).to_numpy().sum(axis=1)
        for i in np.flatnonzero(A > W):
            diags.append(f"line {first_line + i}: pandemic_texts {A[i]} exceeds total_texts {W[i]}")
        for i in np.flatnonzero(E > A):
            diags.append(f"line {first_line + i}: emotion counts sum to {E[i]}, more than pandemic_texts {A[i]}")
    dates = pd.to_datetime(frame["date"], format="%Y-%m-%d", errors="coerce")
    for i in np.flatnonzero(dates.isna().to_numpy()):
        diags.append(f"line {first_line + i}: date {frame['date'].iloc[i]!r} is not ISO-8601 (YYYY-MM-DD)")
    for c in ("distance", "pmedical", "pgovernment", "density", "netout"):
        if c in frame.columns:
            vals = pd.to_numeric(frame[c], errors="coerce")
            bad = vals.isna().to_numpy() & (frame[c].astype(str).str.strip() != "").to_numpy()
            for i in np.flatnonzero(bad):
                diags.append(f"line {first_line + i}: {c} is not a number: {frame[c].iloc[i]!r}")
    return diags


def read_panel(path: str | Path) -> pd.DataFrame:
    """Load and validate a panel CSV; the first problem found is raised."""
    raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    diags = panel_diagnostics(raw)
    if diags:
        column = next((c for c in REQUIRED_COLUMNS if diags[0] == f"missing required column: {c}"), None)
        raise PanelFormatError(f"{path}: {diags[0]}", column)
    return normalize_panel(raw)


def normalize_panel(frame: pd.DataFrame) -> pd.DataFrame:
    """Typed copy sorted by (city, date) with ``date`` as ``datetime.date``."""
    out = frame.copy()
    out["city"] = out["city"].astype(str)
    out["date"] = pd.to_datetime(out["date"].astype(str), format="%Y-%m-%d").dt.date
    for c in INTEGER_COLUMNS:
        out[c] = pd.to_numeric(out[c]).astype(np.int64)
    for c in ("distance", "pmedical", "pgovernment", "density"):
        out[c] = pd.to_numeric(out[c]).astype(float)
    if "netout" in out.columns:
        out["netout"] = pd.to_numeric(out["netout"], errors="coerce").astype(float)
        if out["netout"].isna().all():
            out = out.drop(columns="netout")
    return out.sort_values(["city", "date"], kind="mergesort").reset_index(drop=True)


def write_panel(frame: pd.DataFrame, path: str | Path) -> None:
    cols = [c for c in PANEL_COLUMNS if c in frame.columns]
    out = frame[cols].copy()
    out["date"] = [d.isoformat() for d in out["date"]]
    for c in ("distance", "pmedical", "pgovernment", "density", "netout"):
        if c in out.columns:
            out[c] = [repr(float(v)) if np.isfinite(v) else "" for v in out[c]]
    out.to_csv(path, index=False, lineterminator="\n")


@dataclass
class PanelShape:
    n_cities: int
    n_dates: int
    balanced: bool


def panel_shape(frame: pd.DataFrame) -> PanelShape:
    """Balanced means every city covers the same contiguous run of days."""
    dates_by_city = frame.groupby("city")["date"].apply(lambda s: tuple(sorted(s)))
    all_dates = sorted(set(frame["date"]))
    contiguous = all(
        (b - a).days == 1 for a, b in zip(all_dates, all_dates[1:])
    )
    balanced = contiguous and all(d == tuple(all_dates) for d in dates_by_city)
    return PanelShape(len(dates_by_city), len(all_dates), balanced)
