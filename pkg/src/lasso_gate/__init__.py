"""Calibrated gate on LASSO activation counts for the global null.

The test rejects the hypothesis that no marker is associated with the
response when the number of exactly nonzero LASSO coefficients at a
Monte-Carlo-calibrated penalty exceeds the user's chosen r. See
README.md for conventions (penalty scale, calibration policy,
determinism guarantees) and the CLI.
"""

__version__ = "0.1.0"

from .errors import (
    ConstantColumn,
    DegenerateFit,
    DegenerateResponse,
    FingerprintMismatch,
    InsufficientReplicates,
    IoFailure,
    NoConvergence,
    NotSymmetric,
    UnderdeterminedUnpenalized,
)
from .data import (
    Dataset,
    RngSpec,
    SpectralFactor,
    correlated_normals,
    fingerprint,
    load_dataset_csv,
    sample_covariance,
    save_dataset_csv,
    spectral_decompose,
    standardize,
)
from .solver import (
    LassoFit,
    entry_threshold,
    fit_counter,
    fit_lasso,
    lambda_grid,
    lambda_max,
    soft_threshold,
)
from .calibration import (
    CalibrationEntry,
    CalibrationTable,
    calibrate,
    calibration_quantile,
    load_calibration_csv,
    save_calibration_csv,
    validate_size,
)
from .global_null import TestOutcome, append_outcome_csv, run_global_test
from .baselines import (
    MarginalTestResult,
    bh_global,
    bonferroni_global,
    marginal_t_tests,
    t_cdf,
)
from .power import (
    PowerCurve,
    ScenarioConfig,
    export_power_tables,
    mc_se,
    parse_power_config,
    simulate_scenario1,
    simulate_scenario2,
)

__all__ = [
    "__version__",
    "ConstantColumn",
    "DegenerateFit",
    "DegenerateResponse",
    "FingerprintMismatch",
    "InsufficientReplicates",
    "IoFailure",
    "NoConvergence",
    "NotSymmetric",
    "UnderdeterminedUnpenalized",
    "Dataset",
    "RngSpec",
    "SpectralFactor",
    "correlated_normals",
    "fingerprint",
    "load_dataset_csv",
    "sample_covariance",
    "save_dataset_csv",
    "spectral_decompose",
    "standardize",
    "LassoFit",
    "entry_threshold",
    "fit_counter",
    "fit_lasso",
    "lambda_grid",
    "lambda_max",
    "soft_threshold",
    "CalibrationEntry",
    "CalibrationTable",
    "calibrate",
    "calibration_quantile",
    "load_calibration_csv",
    "save_calibration_csv",
    "validate_size",
    "TestOutcome",
    "append_outcome_csv",
    "run_global_test",
    "MarginalTestResult",
    "bh_global",
    "bonferroni_global",
    "marginal_t_tests",
    "t_cdf",
    "PowerCurve",
    "ScenarioConfig",
    "export_power_tables",
    "mc_se",
    "parse_power_config",
    "simulate_scenario1",
    "simulate_scenario2",
]
