"""Panel specification tests: poolability F, groupwise heteroskedasticity,
first-difference serial correlation, cross-sectional dependence and Hausman."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import stats


@dataclass
class StatResult:
    name: str
    statistic: float
    dof: tuple
    pvalue: float
    notes: list[str] = field(default_factory=list)

    def rejects(self, alpha: float = 0.05) -> bool:
        return self.pvalue < alpha

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "statistic": self.statistic,
            "dof": list(self.dof),
            "pvalue": self.pvalue,
            "notes": list(self.notes),
        }


def f_pool_test(rss_pooled: float, rss_fe: float, n_groups: int, n: int, k: int) -> StatResult:
    """F test of a common intercept against group intercepts.

    ``F = [(RSS_p - RSS_fe) / (N - 1)] / [RSS_fe / (n - N - k)]`` with ``k``
    slope regressors.
    """
    d1, d2 = n_groups - 1, n - n_groups - k
    if d1 <= 0 or d2 <= 0:
        raise ValueError(f"F test needs positive degrees of freedom, got ({d1}, {d2})")
    if rss_fe > rss_pooled * (1 + 1e-12) + 1e-300:
        raise ValueError(f"fixed-effects RSS {rss_fe} exceeds pooled RSS {rss_pooled}")
    gain = max(rss_pooled - rss_fe, 0.0)
    if gain == 0.0:
        F = 0.0
    elif rss_fe == 0.0:
        F = np.inf
    else:
        F = (gain / d1) / (rss_fe / d2)
    return StatResult("F poolability", float(F), (d1, d2), float(stats.f.sf(F, d1, d2)) if np.isfinite(F) else 0.0)


def _by_group(resid, groups) -> list[np.ndarray]:
    frame = pd.DataFrame({"e": np.asarray(resid, dtype=float), "g": np.asarray(groups)})
    return [grp["e"].to_numpy() for _, grp in frame.groupby("g", sort=True)]


def groupwise_het_wald(resid, groups) -> StatResult:
    """Modified Wald statistic for groupwise heteroskedasticity.

    ``W = sum_i (s_i^2 - s^2)^2 / V_i`` with ``s_i^2`` the mean squared
    residual of group i, ``s^2`` the pooled one and
    ``V_i = sum_t (e_it^2 - s_i^2)^2 / (T_i (T_i - 1))``; chi-squared with one
    degree of freedom per contributing group.  Groups with ``V_i = 0`` are
    excluded and noted.
    """
    parts = _by_group(resid, groups)
    labels = sorted(pd.unique(np.asarray(groups)).tolist())
    if any(p.size < 2 for p in parts):
        raise ValueError("each group needs at least 2 residuals")
    e2_all = np.concatenate(parts) ** 2
    s2 = float(e2_all.mean())
    W, dof, notes = 0.0, 0, []
    for label, e in zip(labels, parts):
        e2 = e**2
        s2_i = float(e2.mean())
        V = float(np.sum((e2 - s2_i) ** 2)) / (e.size * (e.size - 1))
        if V == 0.0:
            notes.append(f"group {label}: constant squared residuals; excluded")
            continue
        W += (s2_i - s2) ** 2 / V
        dof += 1
    if dof == 0:
        raise ValueError("no group has residual variance variation")
    return StatResult("groupwise heteroskedasticity (modified Wald)", float(W), (dof,), float(stats.chi2.sf(W, dof)), notes)


def serial_corr_test(resid, groups, times, differenced: bool = False) -> StatResult:
    """First-difference test for serial correlation in panel errors.

    Regress ``u_it`` on ``u_i,t-1`` (no constant), where ``u`` are first
    differenced residuals (taken here unless ``differenced``), and test the
    coefficient against -0.5, the value implied by serially uncorrelated
    level errors.  The Wald statistic uses a group-clustered variance and is
    referred to F(1, N - 1).
    """
    frame = pd.DataFrame({"e": np.asarray(resid, dtype=float), "g": np.asarray(groups), "t": np.asarray(times)})
    frame = frame.sort_values(["g", "t"], kind="mergesort")
    pairs_y, pairs_x, pairs_g = [], [], []
    need = 2 if differenced else 3
    for g, grp in frame.groupby("g", sort=True):
        e = grp["e"].to_numpy()
        t = grp["t"].to_numpy()
        if e.size < need:
            raise ValueError(f"group {g} has {e.size} periods; the test needs at least {need}")
        if differenced:
            u, tu = e, t
        else:
            step = _steps(t)
            u = (e[1:] - e[:-1])[step]
            tu = t[1:][step]
        ok = _steps(tu)
        pairs_y.append(u[1:][ok])
        pairs_x.append(u[:-1][ok])
        pairs_g.extend([g] * int(ok.sum()))
    y = np.concatenate(pairs_y)
    x = np.concatenate(pairs_x)
    g = np.asarray(pairs_g)
    sxx = float(x @ x)
    if y.size < 2 or sxx == 0.0 or not np.any(y):
        raise ValueError("differenced residuals are all zero; serial correlation test is degenerate")
    b = float(x @ y) / sxx
    eps = y - b * x
    scores = pd.Series(x * eps).groupby(g).sum().to_numpy()
    G = scores.size
    if G < 2:
        raise ValueError("serial correlation test needs at least 2 groups")
    V = float(scores @ scores) / sxx**2 * G / (G - 1)
    if V == 0.0:
        raise ValueError("clustered variance is zero; serial correlation test is degenerate")
    F = (b + 0.5) ** 2 / V
    return StatResult(
        "serial correlation (first-difference Wald)",
        float(F),
        (1, G - 1),
        float(stats.f.sf(F, 1, G - 1)),
        [f"AR coefficient of differenced residuals {b:.4f} (H0: -0.5)"],
    )


def _steps(t: np.ndarray) -> np.ndarray:
    """True where consecutive entries of ``t`` are one period apart."""
    t = np.asarray(t)
    if t.size < 2:
        return np.zeros(0, dtype=bool)
    diff = t[1:] - t[:-1]
    if np.issubdtype(diff.dtype, np.number):
        return diff == 1
    return np.array([getattr(d, "days", d) == 1 for d in diff])


def bp_lm_cd_test(resid, groups, times) -> tuple[StatResult, StatResult]:
    """Breusch-Pagan LM test of cross-sectional dependence and its scaled form.

    ``LM = T * sum_{i<j} rho_ij^2`` (chi-squared, N(N-1)/2 dof) and
    ``z = sqrt(1 / (N(N-1))) * sum_{i<j} (T rho_ij^2 - 1)`` (two-sided normal).
    Correlations use uncentred cross-products of the residual series, which
    equal ordinary correlations for within-group demeaned residuals.
    """
    frame = pd.DataFrame({"e": np.asarray(resid, dtype=float), "g": np.asarray(groups), "t": np.asarray(times)})
    if frame.duplicated(["g", "t"]).any():
        raise ValueError("duplicate (group, time) residuals")
    wide = frame.pivot(index="t", columns="g", values="e")
    if wide.isna().any().any():
        raise ValueError("cross-sectional dependence test needs a common set of periods for all groups")
    E = wide.to_numpy()
    T, N = E.shape
    if T < 2:
        raise ValueError("need at least 2 periods")
    if N < 2:
        raise ValueError("need at least 2 groups")
    # fixed summation order: identical series give rho^2 == 1 exactly
    S = np.einsum("ti,tj->ij", E, E, optimize=False)
    d = np.diag(S)
    if np.any(d == 0):
        raise ValueError("a group has all-zero residuals; correlations undefined")
    iu = np.triu_indices(N, 1)
    rho2 = S[iu] ** 2 / (d[iu[0]] * d[iu[1]])
    LM = T * float(rho2.sum())
    dof = N * (N - 1) // 2
    z = np.sqrt(1.0 / (N * (N - 1))) * float(np.sum(T * rho2 - 1.0))
    return (
        StatResult("Breusch-Pagan LM cross-sectional dependence", LM, (dof,), float(stats.chi2.sf(LM, dof))),
        StatResult("scaled LM cross-sectional dependence", z, (), float(2 * stats.norm.sf(abs(z)))),
    )


def hausman_test(b_fe, V_fe, b_re, V_re) -> StatResult:
    """``H = q' (V_fe - V_re)^-1 q`` with ``q = b_fe - b_re``; chi-squared with
    one degree of freedom per shared slope.

    A covariance difference that is not positive definite is inverted with
    the Moore-Penrose pseudo-inverse and a warning.
    """
    b_fe, b_re = np.atleast_1d(np.asarray(b_fe, dtype=float)), np.atleast_1d(np.asarray(b_re, dtype=float))
    V_fe, V_re = np.atleast_2d(np.asarray(V_fe, dtype=float)), np.atleast_2d(np.asarray(V_re, dtype=float))
    k = b_fe.size
    if k == 0:
        raise ValueError("no shared slopes to compare")
    if b_re.size != k or V_fe.shape != (k, k) or V_re.shape != (k, k):
        raise ValueError("slope vectors and covariances are not aligned")
    q = b_fe - b_re
    D = V_fe - V_re
    D = 0.5 * (D + D.T)
    notes = []
    eig = np.linalg.eigvalsh(D)
    if not np.any(q):
        H = 0.0
    elif eig.min() > 1e-12 * max(abs(eig.max()), 1e-300):
        H = float(q @ np.linalg.solve(D, q))
    else:
        msg = "covariance difference is not positive definite; using the pseudo-inverse"
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)
        H = float(q @ np.linalg.pinv(D) @ q)
    return StatResult("Hausman (FE vs RE)", H, (k,), float(stats.chi2.sf(H, k)), notes)
