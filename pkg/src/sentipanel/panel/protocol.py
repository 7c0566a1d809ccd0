"""The panel testing sequence and the regression report.

For each specification: pooled OLS vs fixed effects (F test), groupwise
heteroskedasticity and serial-correlation tests on the fixed-effects fit,
cross-sectional dependence, fixed vs random effects (Hausman), and finally
the fixed-effects estimates with a covariance chosen by the test outcomes.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy import stats

from .design import Design, DesignError, RegressionSpec, build_design, default_specs, within_constant
from .estimators import fe_lsdv_fit, hc_covariance, ols_fit, re_fit
from .testing import (
    StatResult,
    bp_lm_cd_test,
    f_pool_test,
    groupwise_het_wald,
    hausman_test,
    serial_corr_test,
)


def stars(p: float) -> str:
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""


@dataclass
class CoefRow:
    name: str
    coef: float
    se: float
    t: float
    p: float

    @property
    def stars(self) -> str:
        return stars(self.p)

    def ci(self, level: float = 0.95, dof: int | None = None) -> tuple[float, float]:
        q = stats.t.ppf(0.5 + level / 2, dof) if dof else stats.norm.ppf(0.5 + level / 2)
        return self.coef - q * self.se, self.coef + q * self.se

    def to_dict(self) -> dict:
        return {"name": self.name, "coef": self.coef, "se": self.se, "t": self.t, "p": self.p, "stars": self.stars}


@dataclass
class SpecReport:
    dependent: str
    coefficients: list[CoefRow]
    intercepts: list[CoefRow]
    baseline_city: str | None
    n_obs: int
    n_cities: int
    rss: float
    resid_dof: int
    covariance: str
    tests: dict[str, StatResult] = field(default_factory=dict)
    absorbed: list[str] = field(default_factory=list)
    notices: list[str] = field(default_factory=list)

    def coef(self, name: str) -> CoefRow:
        for row in self.coefficients:
            if row.name == name:
                return row
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "dependent": self.dependent,
            "coefficients": [r.to_dict() for r in self.coefficients],
            "intercepts": [r.to_dict() for r in self.intercepts],
            "baseline_city": self.baseline_city,
            "n_obs": self.n_obs,
            "n_cities": self.n_cities,
            "rss": self.rss,
            "resid_dof": self.resid_dof,
            "covariance": self.covariance,
            "tests": {k: v.to_dict() for k, v in self.tests.items()},
            "absorbed": list(self.absorbed),
            "notices": list(self.notices),
        }


def _rows(names, beta, cov, dof) -> list[CoefRow]:
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    rows = []
    for name, b, s in zip(names, beta, se):
        t = b / s if s > 0 else np.inf * np.sign(b) if b else 0.0
        p = float(2 * stats.t.sf(abs(t), dof)) if np.isfinite(t) else 0.0
        rows.append(CoefRow(name, float(b), float(s), float(t), p))
    return rows


def first_difference_residuals(design: Design) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Residuals of the first-differenced regression of y on the time-varying slopes.

    Differences are taken within city over consecutive dates; the trend
    differences to a constant, so an intercept is always included.
    """
    slopes = [c for c in design.slope_columns if c != "trend"]
    frame = design.index.copy()
    frame["__y"] = design.y
    for c in slopes:
        frame[c] = design.X[:, design.columns.index(c)]
    dy, dX, groups, times = [], [], [], []
    for city, grp in frame.groupby("city", sort=True):
        dates = grp["date"].to_numpy()
        ok = np.array([(b - a).days == 1 for a, b in zip(dates[:-1], dates[1:])], dtype=bool)
        v = grp[["__y", *slopes]].to_numpy()
        d = (v[1:] - v[:-1])[ok]
        dy.append(d[:, 0])
        dX.append(d[:, 1:])
        groups.extend([city] * int(ok.sum()))
        times.extend(dates[1:][ok])
    y = np.concatenate(dy)
    X = np.column_stack([np.ones(y.size), np.vstack(dX)])
    res = ols_fit(y, X, ["const", *slopes])
    return res.resid, np.asarray(groups), np.asarray(times)


def run_spec(
    panel: pd.DataFrame,
    spec: RegressionSpec,
    alpha: float = 0.05,
    robust_kind: str = "HC1",
    robust_hausman: bool = False,
) -> SpecReport:
    notices: list[str] = []
    design = build_design(panel, spec, dummies=True)
    absorbed = within_constant(design, [r.name for r in spec.regressors])
    if absorbed:
        notices.append(f"absorbed by city effects (constant within every city): {', '.join(absorbed)}")
        spec = replace(spec, regressors=tuple(r for r in spec.regressors if r.name not in absorbed))
        if not spec.regressors and not spec.trend:
            raise DesignError(f"{spec.dependent}: every regressor is absorbed by the city effects")
        design = build_design(panel, spec, dummies=True)
    pooled = ols_fit(*_xy(build_design(panel, spec, dummies=False)))
    fe = fe_lsdv_fit(design)
    N, n, k = design.n_cities, design.n, len(design.slope_columns)
    tests: dict[str, StatResult] = {}
    if N > 1:
        tests["f_pool"] = f_pool_test(pooled.rss, fe.ols.rss, N, n, k)
    else:
        notices.append("single city: poolability test skipped")
    cities = design.cities
    dates = design.index["date"].to_numpy()
    for key, run in (
        ("heteroskedasticity", lambda: groupwise_het_wald(fe.ols.resid, cities)),
        ("serial", lambda: serial_corr_test(*first_difference_residuals(design), differenced=True)),
        ("bp_lm", lambda: bp_lm_cd_test(fe.ols.resid, cities, dates)),
    ):
        try:
            out = run()
        except ValueError as exc:
            notices.append(f"{key} test skipped: {exc}")
            continue
        if key == "bp_lm":
            tests["bp_lm"], tests["bp_lm_scaled"] = out
        else:
            tests[key] = out
    try:
        tests["hausman"] = _hausman(design, fe, robust_kind if robust_hausman else None)
        if not tests["hausman"].rejects(alpha):
            notices.append("Hausman test does not reject random effects; fixed-effects estimates reported")
    except ValueError as exc:
        notices.append(f"Hausman test skipped: {exc}")

    covariance = spec.covariance
    if covariance == "classical":
        flagged = [key for key in ("heteroskedasticity", "serial") if key in tests and tests[key].rejects(alpha)]
        if flagged:
            covariance = robust_kind
            found = " and ".join({"heteroskedasticity": "groupwise heteroskedasticity", "serial": "serial correlation"}[f] for f in flagged)
            notices.append(f"{found} detected; {robust_kind} covariance used")
    if covariance == "classical":
        cov = fe.ols.cov
    else:
        cov = hc_covariance(design.X, fe.ols.resid, covariance, fe.ols.xtx_inv)
    rows = _rows(design.columns, fe.ols.beta, cov, fe.resid_dof)
    by_name = {r.name: r for r in rows}
    return SpecReport(
        spec.dependent,
        [by_name["const"], *(by_name[c] for c in design.slope_columns)],
        [replace(by_name[c], name=c[5:-1]) for c in design.dummy_columns],
        design.baseline_city,
        n,
        N,
        fe.ols.rss,
        fe.resid_dof,
        covariance,
        tests,
        absorbed,
        notices,
    )


def _xy(design: Design):
    return design.y, design.X, design.columns


def _hausman(design: Design, fe, robust_kind: str | None) -> StatResult:
    names = list(design.slope_columns)
    slopes_X = design.column_block(names)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        re = re_fit(design.y, slopes_X, design.cities, names)
    idx = [design.columns.index(c) for c in names]
    if robust_kind:
        V_fe = hc_covariance(design.X, fe.ols.resid, robust_kind, fe.ols.xtx_inv)[np.ix_(idx, idx)]
        th = np.array([re.theta[g] for g in design.cities])
        frame = pd.DataFrame(slopes_X, columns=names)
        gm = frame.groupby(design.cities).transform("mean").to_numpy()
        Xs = np.column_stack([1.0 - th, slopes_X - th[:, None] * gm])
        V_re = hc_covariance(Xs, re.resid, robust_kind)[1:, 1:]
    else:
        V_fe = fe.ols.cov[np.ix_(idx, idx)]
        V_re = re.slope_cov(names)
    with warnings.catch_warnings(record=True) as more:
        warnings.simplefilter("always")
        result = hausman_test(fe.ols.beta[idx], V_fe, re.slopes(names), V_re)
    result.notes.extend(str(w.message) for w in caught)
    result.notes.extend(str(w.message) for w in more if str(w.message) not in result.notes)
    return result


@dataclass
class ProtocolReport:
    reports: list[SpecReport]
    notices: list[str] = field(default_factory=list)

    def report(self, dependent: str) -> SpecReport:
        for r in self.reports:
            if r.dependent == dependent:
                return r
        raise KeyError(dependent)

    def to_json(self) -> str:
        payload = {"models": [r.to_dict() for r in self.reports], "notices": list(self.notices)}
        return json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n"

    def to_text(self) -> str:
        return format_table(self)


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    return str(x)


def run_protocol(
    panel: pd.DataFrame,
    specs: list[RegressionSpec] | None = None,
    alpha: float = 0.05,
    robust_kind: str = "HC1",
    robust_hausman: bool = False,
) -> ProtocolReport:
    """Run every specification; the net-outflow one is skipped with a notice
    when the panel has no ``netout`` values."""
    has_netout = "netout" in panel.columns and panel["netout"].notna().any()
    specs = default_specs(include_netout=True) if specs is None else list(specs)
    out = ProtocolReport([])
    for spec in specs:
        if spec.dependent == "netout" and not has_netout:
            out.notices.append("panel has no netout column; net-outflow regression skipped")
            continue
        try:
            out.reports.append(run_spec(panel, spec, alpha, robust_kind, robust_hausman))
        except ValueError as exc:
            raise type(exc)(f"{spec.dependent}: {exc}") from exc
    return out


def _cell(row: CoefRow) -> tuple[str, str]:
    return f"{row.coef:.3f}{row.stars}", f"({row.se:.3f})"


def format_table(report: ProtocolReport) -> str:
    """Plain-text table: one column per model, coefficient with stars above
    its standard error, then city intercepts, counts and test statistics."""
    models = report.reports
    if not models:
        return "no models estimated\n" + "".join(f"note: {n}\n" for n in report.notices)
    names: list[str] = []
    for m in models:
        for r in m.coefficients:
            if r.name not in names:
                names.append(r.name)
    cities: list[str] = []
    for m in models:
        for r in m.intercepts:
            if r.name not in cities:
                cities.append(r.name)
    header = ["", *(f"({i + 1}) {m.dependent}" for i, m in enumerate(models))]
    body: list[list[str]] = []
    for name in names:
        top, bottom = [name], [""]
        for m in models:
            row = next((r for r in m.coefficients if r.name == name), None)
            a, b = _cell(row) if row else ("", "")
            top.append(a)
            bottom.append(b)
        body += [top, bottom]
    if cities:
        body.append(["city intercepts (vs baseline)"] + [m.baseline_city or "" for m in models])
        for city in cities:
            top, bottom = [city], [""]
            for m in models:
                row = next((r for r in m.intercepts if r.name == city), None)
                a, b = _cell(row) if row else ("", "")
                top.append(a)
                bottom.append(b)
            body += [top, bottom]
    body.append(["# observations", *(str(m.n_obs) for m in models)])
    body.append(["# subjects", *(str(m.n_cities) for m in models)])
    body.append(["covariance", *(m.covariance for m in models)])
    for key, label in (
        ("f_pool", "F poolability"),
        ("heteroskedasticity", "het. Wald chi2"),
        ("serial", "serial corr. F"),
        ("bp_lm", "BP LM chi2"),
        ("bp_lm_scaled", "scaled LM z"),
        ("hausman", "Hausman chi2"),
    ):
        cells = [label]
        for m in models:
            t = m.tests.get(key)
            cells.append(f"{t.statistic:.4f} [p={t.pvalue:.4f}]" if t else "")
        body.append(cells)
    widths = [max(len(r[j]) for r in [header, *body]) for j in range(len(header))]
    rule = "-" * (sum(widths) + 2 * (len(widths) - 1))

    def line(cells):
        return "  ".join(c.ljust(w) if j == 0 else c.rjust(w) for j, (c, w) in enumerate(zip(cells, widths))).rstrip()

    out = [rule, line(header), rule, *(line(r) for r in body), rule]
    out.append("Standard errors in parentheses; *** p<0.01, ** p<0.05, * p<0.1")
    for m in models:
        for n in m.notices:
            out.append(f"note ({m.dependent}): {n}")
    for n in report.notices:
        out.append(f"note: {n}")
    return "\n".join(out) + "\n"
