"""Panel econometrics for city-day sentiment shares."""

from .data import (
    COUNT_COLUMNS,
    COVARIATES,
    PANEL_COLUMNS,
    ClassifiedText,
    PanelFormatError,
    aggregate_shares,
    count_classified,
    normalize_panel,
    panel_diagnostics,
    panel_shape,
    read_panel,
    write_panel,
)
from .design import Design, DesignError, Regressor, RegressionSpec, build_design, default_regressors, default_specs
from .estimators import (
    RankDeficientError,
    UnidentifiedError,
    fe_lsdv_fit,
    hc_covariance,
    ols_fit,
    re_fit,
    within_fit,
)
from .protocol import ProtocolReport, SpecReport, run_protocol, run_spec, stars
from .testing import StatResult, bp_lm_cd_test, f_pool_test, groupwise_het_wald, hausman_test, serial_corr_test

__all__ = [
    "COUNT_COLUMNS", "COVARIATES", "PANEL_COLUMNS", "ClassifiedText", "PanelFormatError", "aggregate_shares",
    "count_classified", "normalize_panel", "panel_diagnostics", "panel_shape", "read_panel", "write_panel",
    "Design", "DesignError", "Regressor", "RegressionSpec", "build_design", "default_regressors", "default_specs",
    "RankDeficientError", "UnidentifiedError", "fe_lsdv_fit", "hc_covariance", "ols_fit", "re_fit", "within_fit",
    "ProtocolReport", "SpecReport", "run_protocol", "run_spec", "stars",
    "StatResult", "bp_lm_cd_test", "f_pool_test", "groupwise_het_wald", "hausman_test", "serial_corr_test",
]
