"""Least squares, fixed-effects (LSDV and within) and random-effects estimators."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import linalg

from .design import Design


class RankDeficientError(ValueError):
    def __init__(self, message: str, columns: list[str]):
        super().__init__(message)
        self.columns = columns


class UnidentifiedError(ValueError):
    def __init__(self, message: str, columns: list[str]):
        super().__init__(message)
        self.columns = columns


def _names(columns, k: int) -> list[str]:
    return list(columns) if columns is not None else [f"x{j}" for j in range(k)]


@dataclass
class OlsResult:
    beta: np.ndarray
    resid: np.ndarray
    rss: float
    cov: np.ndarray
    columns: list[str]
    xtx_inv: np.ndarray

    @property
    def n(self) -> int:
        return self.resid.size

    @property
    def k(self) -> int:
        return self.beta.size

    @property
    def sigma2(self) -> float:
        return self.rss / (self.n - self.k)

    def coef(self, name: str) -> float:
        return float(self.beta[self.columns.index(name)])


def _qr(X: np.ndarray, columns: list[str]):
    """Pivoted QR with a rank check; returns Q, R and the column permutation."""
    Q, R, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(X.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < X.shape[1]:
        dropped = [columns[j] for j in sorted(piv[rank:])]
        raise RankDeficientError(
            f"design is rank deficient ({rank} of {X.shape[1]}); linearly dependent column(s): {', '.join(dropped)}",
            dropped,
        )
    return Q, R, piv


def ols_fit(y, X, columns=None) -> OlsResult:
    """Least squares through pivoted QR, with classical covariance
    ``RSS / (n - k) * (X'X)^-1``."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError(f"y {y.shape} and X {X.shape} do not align")
    n, k = X.shape
    names = _names(columns, k)
    if n <= k:
        raise ValueError(f"need more rows than columns, got {n} rows and {k} columns")
    Q, R, piv = _qr(X, names)
    b_perm = linalg.solve_triangular(R, Q.T @ y)
    beta = np.empty(k)
    beta[piv] = b_perm
    resid = y - X @ beta
    rss = float(resid @ resid)
    R_inv = linalg.solve_triangular(R, np.eye(k))
    inv_perm = R_inv @ R_inv.T
    xtx_inv = np.empty((k, k))
    xtx_inv[np.ix_(piv, piv)] = inv_perm
    xtx_inv = 0.5 * (xtx_inv + xtx_inv.T)
    cov = rss / (n - k) * xtx_inv
    return OlsResult(beta, resid, rss, cov, names, xtx_inv)


def hc_covariance(X, resid, kind: str = "HC1", xtx_inv: np.ndarray | None = None) -> np.ndarray:
    """Sandwich covariance ``(X'X)^-1 X' diag(e^2) X (X'X)^-1``; HC1 scales by n/(n-k)."""
    X = np.asarray(X, dtype=float)
    e = np.asarray(resid, dtype=float)
    if e.shape != (X.shape[0],):
        raise ValueError(f"{e.size} residuals for {X.shape[0]} rows")
    if kind not in ("HC0", "HC1"):
        raise ValueError(f"kind must be HC0 or HC1, got {kind!r}")
    n, k = X.shape
    if xtx_inv is None:
        _, R, piv = _qr(X, _names(None, k))
        R_inv = linalg.solve_triangular(R, np.eye(k))
        xtx_inv = np.empty((k, k))
        xtx_inv[np.ix_(piv, piv)] = R_inv @ R_inv.T
    Xe = X * e[:, None]
    meat = Xe.T @ Xe
    cov = xtx_inv @ meat @ xtx_inv
    if kind == "HC1":
        if n <= k:
            raise ValueError("HC1 needs n > k")
        cov *= n / (n - k)
    return 0.5 * (cov + cov.T)


@dataclass
class FeResult:
    """LSDV fit: slopes, the baseline intercept and per-city intercept gaps."""

    ols: OlsResult
    slope_columns: list[str]
    dummy_columns: list[str]
    baseline_city: str | None
    n_cities: int

    @property
    def slopes(self) -> np.ndarray:
        return np.array([self.ols.coef(c) for c in self.slope_columns])

    def intercepts(self) -> dict[str, float]:
        """Dummy coefficients, i.e. each city's intercept minus the baseline's."""
        return {c[5:-1]: self.ols.coef(c) for c in self.dummy_columns}

    @property
    def resid_dof(self) -> int:
        return self.ols.n - self.ols.k


def fe_lsdv_fit(design: Design) -> FeResult:
    """OLS on the dummy-augmented design."""
    res = ols_fit(design.y, design.X, design.columns)
    return FeResult(res, list(design.slope_columns), list(design.dummy_columns), design.baseline_city, design.n_cities)


@dataclass
class WithinResult:
    beta: np.ndarray
    resid: np.ndarray
    rss: float
    cov: np.ndarray
    columns: list[str]
    n: int
    n_groups: int
    kept: np.ndarray  # row mask after dropping single-observation groups

    @property
    def dof(self) -> int:
        return self.n - self.n_groups - self.beta.size


def demean(values: np.ndarray, groups: np.ndarray) -> np.ndarray:
    """Subtract each group's mean (columns of a 2-D array independently)."""
    frame = pd.DataFrame(np.asarray(values, dtype=float).reshape(len(groups), -1))
    out = frame - frame.groupby(np.asarray(groups)).transform("mean")
    return out.to_numpy().reshape(np.shape(values))


def within_fit(y, X, groups, columns=None) -> WithinResult:
    """Fixed-effects slopes from within-group demeaned data.

    Groups with a single observation carry no within variation and are
    dropped with a warning.  The error variance uses ``n - N - k`` degrees
    of freedom.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    groups = np.asarray(groups)
    names = _names(columns, X.shape[1])
    sizes = pd.Series(groups).map(pd.Series(groups).value_counts()).to_numpy()
    kept = sizes > 1
    if not kept.all():
        lone = sorted(set(groups[~kept].tolist()))
        warnings.warn(f"dropping group(s) with one observation: {', '.join(map(str, lone))}", stacklevel=2)
    y, X, groups = y[kept], X[kept], groups[kept]
    yd = demean(y, groups)
    Xd = demean(X, groups)
    scale = np.maximum(np.abs(X).max(axis=0), 1.0)
    flat = [names[j] for j in range(X.shape[1]) if np.abs(Xd[:, j]).max() <= 1e-12 * scale[j]]
    if flat:
        raise UnidentifiedError(f"no within-group variation (absorbed by group effects): {', '.join(flat)}", flat)
    n, k = Xd.shape
    N = int(pd.unique(groups).size)
    if n - N - k <= 0:
        raise ValueError(f"within estimator has no residual degrees of freedom (n={n}, groups={N}, k={k})")
    Q, R, piv = _qr(Xd, names)
    beta = np.empty(k)
    beta[piv] = linalg.solve_triangular(R, Q.T @ yd)
    resid = yd - Xd @ beta
    rss = float(resid @ resid)
    R_inv = linalg.solve_triangular(R, np.eye(k))
    xtx_inv = np.empty((k, k))
    xtx_inv[np.ix_(piv, piv)] = R_inv @ R_inv.T
    cov = rss / (n - N - k) * 0.5 * (xtx_inv + xtx_inv.T)
    return WithinResult(beta, resid, rss, cov, names, n, N, kept)


@dataclass
class ReResult:
    beta: np.ndarray  # intercept first, then slopes
    cov: np.ndarray
    columns: list[str]
    resid: np.ndarray
    sigma2_eps: float
    sigma2_alpha: float
    theta: dict = field(default_factory=dict)
    clamped: bool = False

    def slopes(self, names) -> np.ndarray:
        return np.array([self.beta[self.columns.index(c)] for c in names])

    def slope_cov(self, names) -> np.ndarray:
        idx = [self.columns.index(c) for c in names]
        return self.cov[np.ix_(idx, idx)]


def re_fit(y, X, groups, columns=None) -> ReResult:
    """Random-effects GLS with Swamy-Arora variance components.

    ``X`` holds the slope regressors only (an intercept is added).  The
    idiosyncratic variance comes from the within regression, the effect
    variance from the between regression on group means, and each group is
    quasi-demeaned with ``theta_i = 1 - sqrt(s2_e / (T_i s2_a + s2_e))``.
    A negative effect variance is clamped to 0 with a warning.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    groups = np.asarray(groups)
    names = _names(columns, X.shape[1])
    n, k = X.shape

    # time-invariant regressors have no within variation; only the varying ones enter the within step
    Xd = demean(X, groups)
    scale = np.maximum(np.abs(X).max(axis=0), 1.0)
    varying = [j for j in range(k) if np.abs(Xd[:, j]).max() > 1e-12 * scale[j]]
    w = within_fit(y, X[:, varying], groups, [names[j] for j in varying])
    sigma2_eps = w.rss / w.dof

    frame = pd.DataFrame(X, columns=names)
    frame["__y"] = y
    frame["__g"] = groups
    means = frame.groupby("__g", sort=True).mean()
    T_i = frame.groupby("__g", sort=True).size()
    N = len(means)
    Zb = np.column_stack([np.ones(N), means[names].to_numpy()])
    coef, _, rank, _ = np.linalg.lstsq(Zb, means["__y"].to_numpy(), rcond=None)
    if N - rank <= 0:
        raise ValueError(f"between regression has no degrees of freedom (groups={N}, rank={rank})")
    eb = means["__y"].to_numpy() - Zb @ coef
    sigma2_between = float(eb @ eb) / (N - rank)
    T_bar = N / float(np.sum(1.0 / T_i.to_numpy()))  # harmonic mean
    sigma2_alpha = sigma2_between - sigma2_eps / T_bar
    clamped = sigma2_alpha < 0
    if clamped:
        warnings.warn(
            f"negative random-effect variance estimate ({sigma2_alpha:.3g}) clamped to 0", stacklevel=2
        )
        sigma2_alpha = 0.0

    theta = {g: 1.0 - np.sqrt(sigma2_eps / (t * sigma2_alpha + sigma2_eps)) for g, t in T_i.items()}
    th = np.array([theta[g] for g in groups])
    gm = frame.groupby("__g")[[*names, "__y"]].transform("mean")
    ys = y - th * gm["__y"].to_numpy()
    Xs = np.column_stack([1.0 - th, X - th[:, None] * gm[names].to_numpy()])
    cols = ["const", *names]
    res = ols_fit(ys, Xs, cols)
    return ReResult(res.beta, res.cov, cols, res.resid, sigma2_eps, sigma2_alpha, theta, bool(clamped))
