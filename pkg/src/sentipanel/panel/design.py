"""Regression specifications and design-matrix assembly for city-day panels."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..labels import EMOTIONS
from .data import aggregate_shares

TRANSFORMS = ("lag1", "log1p")
COVARIANCES = ("classical", "HC0", "HC1")


@dataclass(frozen=True)
class Regressor:
    """A panel column with an optional lag and/or ``ln(1 + x)`` transform.

    Transforms apply in the order given; lag-then-log and log-then-lag give
    the same values.
    """

    column: str
    transforms: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "transforms", tuple(self.transforms))
        for t in self.transforms:
            if t not in TRANSFORMS:
                raise ValueError(f"unknown transform {t!r}; choose from {TRANSFORMS}")
        if len(set(self.transforms)) != len(self.transforms):
            raise ValueError(f"repeated transform in {self.transforms}")

    @property
    def name(self) -> str:
        base = f"log1p_{self.column}" if "log1p" in self.transforms else self.column
        return f"L.{base}" if "lag1" in self.transforms else base


@dataclass(frozen=True)
class RegressionSpec:
    dependent: str
    regressors: tuple[Regressor, ...]
    city_dummies: bool = True
    trend: bool = True
    covariance: str = "classical"
    baseline_city: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "regressors", tuple(self.regressors))
        if self.covariance not in COVARIANCES:
            raise ValueError(f"covariance must be one of {COVARIANCES}, got {self.covariance!r}")
        names = [r.name for r in self.regressors]
        if len(set(names)) != len(names):
            raise ValueError(f"regressor listed twice in {names}")
        cols = [r.column for r in self.regressors]
        if len(set(cols)) != len(cols):
            raise ValueError("at most one transform chain per regressor column")


def default_regressors() -> tuple[Regressor, ...]:
    """Lagged log counts, lagged distance, and the city-level controls."""
    return (
        Regressor("cases", ("lag1", "log1p")),
        Regressor("foreign", ("lag1", "log1p")),
        Regressor("risk", ("lag1", "log1p")),
        Regressor("distance", ("lag1",)),
        Regressor("pmedical"),
        Regressor("pgovernment"),
        Regressor("density"),
    )


def default_specs(include_netout: bool = True) -> list[RegressionSpec]:
    deps = ["fear", "confidence", "attention"] + (["netout"] if include_netout else [])
    return [RegressionSpec(d, default_regressors()) for d in deps]


def dependent_column(dependent: str) -> str:
    """Column of the share frame holding ``dependent``."""
    return f"{dependent}_share" if dependent in EMOTIONS else dependent


def with_shares(panel: pd.DataFrame) -> pd.DataFrame:
    if "attention" in panel.columns:
        return panel
    shares, _ = aggregate_shares(panel)
    return shares


class DesignError(ValueError):
    pass


@dataclass
class Design:
    y: np.ndarray
    X: np.ndarray
    columns: list[str]
    index: pd.DataFrame  # city and date of every row
    slope_columns: list[str]
    dummy_columns: list[str] = field(default_factory=list)
    baseline_city: str | None = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def cities(self) -> np.ndarray:
        return self.index["city"].to_numpy()

    @property
    def n_cities(self) -> int:
        return int(pd.unique(self.index["city"]).size)

    def column_block(self, names) -> np.ndarray:
        idx = [self.columns.index(c) for c in names]
        return self.X[:, idx]


def transformed_frame(panel: pd.DataFrame, spec: RegressionSpec) -> pd.DataFrame:
    """City, date, day index, dependent and transformed regressors (NaN where
    a lag reaches before a city's first date or across a gap)."""
    data = with_shares(panel).sort_values(["city", "date"], kind="mergesort").reset_index(drop=True)
    dep = dependent_column(spec.dependent)
    if dep not in data.columns:
        raise DesignError(f"panel has no column for dependent variable {spec.dependent!r}", )
    out = data[["city", "date"]].copy()
    first = min(data["date"])
    out["trend"] = [(d - first).days + 1 for d in data["date"]]
    out["__y"] = data[dep].astype(float)
    prev_date = data.groupby("city")["date"].shift(1)
    consecutive = np.array(
        [p is not None and not pd.isna(p) and (d - p).days == 1 for d, p in zip(data["date"], prev_date)]
    )
    for reg in spec.regressors:
        if reg.column not in data.columns:
            raise DesignError(f"panel has no column {reg.column!r}")
        v = data[reg.column].astype(float)
        for t in reg.transforms:
            if t == "lag1":
                v = v.groupby(data["city"]).shift(1).where(consecutive)
            else:
                if (v.dropna() < -1).any():
                    raise DesignError(f"log1p of {reg.column} needs values > -1")
                v = np.log1p(v)
        out[reg.name] = v.to_numpy()
    return out


def build_design(panel: pd.DataFrame, spec: RegressionSpec, dummies: bool | None = None) -> Design:
    """Rows with any missing value are dropped (lags, A = 0 emotion shares).

    Columns are ``const``, the regressors, ``trend`` and one dummy per city
    other than the baseline (first city in sort order unless named).
    """
    frame = transformed_frame(panel, spec)
    names = [r.name for r in spec.regressors]
    keep = frame[["__y", *names]].notna().all(axis=1).to_numpy()
    frame = frame.loc[keep].reset_index(drop=True)
    if frame.empty:
        raise DesignError(f"no rows left for {spec.dependent!r} after lags and missing values")
    slope_cols = names + (["trend"] if spec.trend else [])
    X = [np.ones(len(frame))] + [frame[c].to_numpy(dtype=float) for c in slope_cols]
    columns = ["const", *slope_cols]
    use_dummies = spec.city_dummies if dummies is None else dummies
    dummy_cols: list[str] = []
    cities = sorted(pd.unique(frame["city"]))
    baseline = spec.baseline_city if spec.baseline_city is not None else cities[0]
    if use_dummies:
        if baseline not in cities:
            raise DesignError(f"baseline city {baseline!r} not in panel")
        for c in cities:
            if c != baseline:
                X.append((frame["city"] == c).to_numpy(dtype=float))
                dummy_cols.append(f"city[{c}]")
        columns += dummy_cols
    X = np.column_stack(X)
    _check_duplicates(X, columns)
    return Design(
        frame["__y"].to_numpy(dtype=float),
        X,
        columns,
        frame[["city", "date"]],
        slope_cols,
        dummy_cols,
        baseline if use_dummies else None,
    )


def _check_duplicates(X: np.ndarray, columns: list[str]) -> None:
    for j in range(X.shape[1]):
        for k in range(j + 1, X.shape[1]):
            if np.array_equal(X[:, j], X[:, k]):
                raise DesignError(f"collinear duplicate columns: {columns[j]} and {columns[k]}")


def within_constant(design: Design, columns) -> list[str]:
    """Columns that do not vary within any city (absorbed by city effects)."""
    out = []
    cities = design.cities
    for c in columns:
        x = design.X[:, design.columns.index(c)]
        frame = pd.DataFrame({"city": cities, "x": x})
        if float(frame.groupby("city")["x"].agg(lambda s: s.max() - s.min()).max()) == 0.0:
            out.append(c)
    return out
