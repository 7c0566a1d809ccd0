"""Synthetic city-day panels with known coefficients, and a Monte Carlo
harness for the testing protocol."""

from __future__ import annotations

import datetime as dt
import time
from dataclasses import dataclass

import numpy as np
import pandas as pd

from ..labels import EMOTIONS
from .data import PANEL_COLUMNS
from .design import RegressionSpec, default_specs
from .protocol import run_protocol

SLOPES = ("L.log1p_cases", "L.log1p_foreign", "L.log1p_risk", "L.distance", "trend")

# true slopes per dependent variable, in SLOPES order
TRUE_BETA: dict[str, tuple[float, ...]] = {
    "fear": (0.02, 0.01, 0.01, -0.0003, 0.001),
    "confidence": (-0.015, -0.005, -0.008, 0.0003, 0.001),
    "attention": (0.02, 0.008, 0.01, -0.0003, -0.001),
    "netout": (-40.0, -10.0, -15.0, 0.5, 2.0),
}

# city-intercept ranges; wide relative to the sampling noise
INTERCEPT_RANGE = {"fear": (0.10, 0.25), "confidence": (0.20, 0.30), "attention": (0.10, 0.30)}


@dataclass
class SimulatedPanel:
    panel: pd.DataFrame
    beta: dict[str, dict[str, float]]
    intercepts: dict[str, dict[str, float]]


def _covariates(rng: np.random.Generator, n_days: int) -> dict[str, np.ndarray]:
    t = np.arange(n_days)
    centre = rng.uniform(0.2, 0.8) * n_days
    width = rng.uniform(4.0, 10.0)
    level = rng.uniform(0.5, 3.5)
    wave = np.exp(level * np.exp(-0.5 * ((t - centre) / width) ** 2))
    cases = rng.poisson(np.minimum(wave * rng.uniform(0.5, 3.0), 90.0))
    foreign = rng.poisson(rng.uniform(0.2, 2.0), n_days)
    risk = rng.poisson(0.5 + 2.0 * wave / wave.max())
    steps = rng.normal(0.0, 4.0, n_days)
    distance = np.clip(rng.uniform(30.0, 100.0) + np.cumsum(steps), 0.0, 150.0)
    return {"cases": cases, "foreign": foreign, "risk": risk, "distance": distance}


def _design_rows(cov: dict[str, np.ndarray], first_day: int, n_days: int) -> np.ndarray:
    """Lagged regressor values (and trend) for panel days 0..n_days-1; the
    covariate arrays have one extra leading day."""
    lag = slice(0, n_days)
    return np.column_stack(
        [
            np.log1p(cov["cases"][lag]),
            np.log1p(cov["foreign"][lag]),
            np.log1p(cov["risk"][lag]),
            cov["distance"][lag],
            np.arange(first_day, first_day + n_days, dtype=float),
        ]
    )


def simulate_panel(
    seed: int = 0,
    n_cities: int = 10,
    n_days: int = 31,
    start: dt.date = dt.date(2021, 1, 1),
    mean_texts: tuple[float, float] = (300.0, 20000.0),
    netout_sd: tuple[float, float] = (20.0, 200.0),
    include_netout: bool = True,
) -> SimulatedPanel:
    """A balanced panel generated from the regression model itself.

    Shares are binomial proportions whose expectation is linear in the lagged
    regressors and the trend; the number of texts per city spans
    ``mean_texts`` on a log scale, so the share errors are groupwise
    heteroskedastic.  City-level controls are constant within each city.
    """
    rng = np.random.default_rng([seed, 29])
    cities = [f"city{i:02d}" for i in range(n_cities)]
    dates = [start + dt.timedelta(days=d) for d in range(n_days)]
    text_scale = np.geomspace(*mean_texts, n_cities)
    sd_scale = np.geomspace(*netout_sd, n_cities)
    alpha = {k: rng.permutation(np.linspace(*r, n_cities)) for k, r in INTERCEPT_RANGE.items()}
    alpha["netout"] = rng.normal(0.0, 500.0, n_cities)
    beta = {k: np.asarray(v) for k, v in TRUE_BETA.items()}
    rows = []
    for i, city in enumerate(cities):
        cov = _covariates(rng, n_days + 1)
        Z = _design_rows(cov, 1, n_days)
        p = {k: alpha[k][i] + Z @ beta[k] for k in INTERCEPT_RANGE}
        p_rest = 1.0 - p["fear"] - p["confidence"]
        for k, v in p.items():
            if v.min() <= 0.0 or v.max() >= 1.0:
                raise RuntimeError(f"{k} probability left (0, 1) for {city}; adjust the generator ranges")
        if p_rest.min() <= 0.0:
            raise RuntimeError(f"fear and confidence probabilities exceed 1 for {city}")
        W = rng.poisson(text_scale[i], n_days) + 1
        A = rng.binomial(W, p["attention"])
        fear = rng.binomial(A, p["fear"])
        confidence = rng.binomial(A - fear, p["confidence"] / (1.0 - p["fear"]))
        others = np.array([rng.multinomial(r, np.full(6, 1 / 6)) for r in A - fear - confidence])
        netout = alpha["netout"][i] + Z @ beta["netout"] + rng.normal(0.0, sd_scale[i], n_days)
        controls = rng.uniform([0.1, 0.1, 200.0], [0.9, 0.9, 3000.0])
        for d in range(n_days):
            counts = dict(zip([e for e in EMOTIONS if e not in ("fear", "confidence")], others[d]))
            counts.update(fear=fear[d], confidence=confidence[d])
            rows.append(
                {
                    "city": city,
                    "date": dates[d],
                    "total_texts": int(W[d]),
                    "pandemic_texts": int(A[d]),
                    **{e: int(counts[e]) for e in EMOTIONS},
                    "cases": int(cov["cases"][d + 1]),
                    "foreign": int(cov["foreign"][d + 1]),
                    "risk": int(cov["risk"][d + 1]),
                    "distance": float(cov["distance"][d + 1]),
                    "pmedical": float(controls[0]),
                    "pgovernment": float(controls[1]),
                    "density": float(controls[2]),
                    "netout": float(netout[d]),
                }
            )
    panel = pd.DataFrame(rows, columns=list(PANEL_COLUMNS))
    if not include_netout:
        panel = panel.drop(columns="netout")
    truth = {k: dict(zip(SLOPES, map(float, v))) for k, v in TRUE_BETA.items()}
    intercepts = {k: dict(zip(cities, map(float, v))) for k, v in alpha.items()}
    return SimulatedPanel(panel, truth, intercepts)


@dataclass
class MonteCarloSummary:
    replications: int
    coverage: dict[str, dict[str, float]]
    f_reject: dict[str, float]
    robust_selected: dict[str, float]
    seconds: float
    level: float = 0.95

    def min_coverage(self) -> float:
        return min(v for cov in self.coverage.values() for v in cov.values())

    def min_f_reject(self) -> float:
        return min(self.f_reject.values())


def monte_carlo(
    replications: int = 200,
    seed: int = 0,
    specs: list[RegressionSpec] | None = None,
    level: float = 0.95,
    alpha: float = 0.05,
) -> MonteCarloSummary:
    """Run the protocol on independent simulated panels and tally how often
    each confidence interval covers the true slope and how often the
    poolability test rejects."""
    specs = default_specs(include_netout=True) if specs is None else specs
    deps = [s.dependent for s in specs]
    hits = {d: {c: 0 for c in SLOPES} for d in deps}
    f_hits = dict.fromkeys(deps, 0)
    robust = dict.fromkeys(deps, 0)
    t0 = time.perf_counter()
    for r in range(replications):
        sim = simulate_panel(seed=seed * 100_003 + r)
        report = run_protocol(sim.panel, specs, alpha=alpha)
        for m in report.reports:
            f_hits[m.dependent] += m.tests["f_pool"].rejects(alpha)
            robust[m.dependent] += m.covariance != "classical"
            for c in SLOPES:
                lo, hi = m.coef(c).ci(level, m.resid_dof)
                hits[m.dependent][c] += lo <= sim.beta[m.dependent][c] <= hi
    n = float(replications)
    return MonteCarloSummary(
        replications,
        {d: {c: float(h / n) for c, h in v.items()} for d, v in hits.items()},
        {d: float(v / n) for d, v in f_hits.items()},
        {d: float(v / n) for d, v in robust.items()},
        time.perf_counter() - t0,
        level,
    )
