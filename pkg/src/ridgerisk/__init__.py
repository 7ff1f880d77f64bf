"""Risk prediction for high-dimensional (kernel) ridge regression.

Train-data-only risk estimators (GCV, spectrum-only, coefficient norm),
population-side random-matrix formulas (effective regularization and the
omniscient risk), scaling-law exponent estimation, synthetic Gaussian
ground truth, and a CLI over a flat CSV report format.
"""

from .errors import InputError, InvariantError, NumericalError, RidgeRiskError
from .io_cli import (
    ExperimentConfig,
    ExperimentResult,
    LambdaGridSpec,
    PopulationSpec,
    PredictorFlags,
    build_lambda_grid,
    center_labels,
    main,
    read_kernel,
    read_report,
    run_experiment,
    write_kernel,
    write_report,
)
from .predictors import (
    NON_CLASSICAL_THRESHOLD,
    RiskReport,
    RiskReportRow,
    SpecParams,
    apply_spec_params,
    classify_regime,
    fit_spec_params,
    gcv,
    hat_kappa,
    norm_estimate,
    pearson_correlation,
    regime_ratio,
    spectrum_bases,
    spectrum_only,
)
from .ridge_path import (
    DualRidgeFit,
    LabelMatrix,
    LambdaGrid,
    coefficient_norm_sq,
    empirical_risk,
    fit_path,
    ridgeless_fit,
    test_risk,
)
from .rmt_core import (
    EffectiveReg,
    PopulationModel,
    curve_coincidence,
    mp_consistency_curves,
    omniscient_risk,
    omniscient_risk_noisy,
    solve_kappa,
)
from .scaling_laws import (
    ObservedRate,
    ScalingEstimate,
    estimate_delta,
    estimate_gamma,
    observed_rate,
    quadratic_form_path,
    trace_inverse_gram,
)
from .spectral import EigenSystem, GramMatrix, eigh, eigvalsh_gram, gram_from_features
from .synthesis import SyntheticInstance, embed_noise, make_population, sample_instance

__version__ = "0.1.0"

__all__ = [
    "DualRidgeFit",
    "EffectiveReg",
    "EigenSystem",
    "ExperimentConfig",
    "ExperimentResult",
    "GramMatrix",
    "InputError",
    "InvariantError",
    "LabelMatrix",
    "LambdaGrid",
    "LambdaGridSpec",
    "NON_CLASSICAL_THRESHOLD",
    "NumericalError",
    "ObservedRate",
    "PopulationModel",
    "PopulationSpec",
    "PredictorFlags",
    "RidgeRiskError",
    "RiskReport",
    "RiskReportRow",
    "ScalingEstimate",
    "SpecParams",
    "SyntheticInstance",
    "apply_spec_params",
    "build_lambda_grid",
    "center_labels",
    "classify_regime",
    "coefficient_norm_sq",
    "curve_coincidence",
    "eigh",
    "eigvalsh_gram",
    "embed_noise",
    "empirical_risk",
    "estimate_delta",
    "estimate_gamma",
    "fit_path",
    "fit_spec_params",
    "gcv",
    "gram_from_features",
    "hat_kappa",
    "main",
    "make_population",
    "mp_consistency_curves",
    "norm_estimate",
    "observed_rate",
    "omniscient_risk",
    "omniscient_risk_noisy",
    "pearson_correlation",
    "quadratic_form_path",
    "read_kernel",
    "read_report",
    "regime_ratio",
    "ridgeless_fit",
    "run_experiment",
    "sample_instance",
    "solve_kappa",
    "spectrum_bases",
    "spectrum_only",
    "test_risk",
    "trace_inverse_gram",
    "write_kernel",
    "write_report",
]
