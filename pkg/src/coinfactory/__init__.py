"""Unbiased coin factory: debiased truncated estimators with exact oracles."""

from .approx import (
    BernsteinPolynomial,
    CoefficientScheme,
    FunctionSpec,
    PRESET_LABELS,
    bernstein_eval,
    bernstein_eval_exact,
    load_coefficient_table,
    lower_coeff,
    lower_coeff_exact,
    lower_polynomial,
    min_support_index,
    preset,
    save_coefficient_table,
    scheme_from_function,
    upper_coeff,
    upper_coeff_exact,
    upper_polynomial,
    validate_consistency,
)
from .errors import (
    CertificationError,
    DivergenceError,
    DomainError,
    FactoryError,
    ReplayExhaustedError,
    SchemeValidationError,
    TableFormatError,
    TruncationCapError,
    WindowError,
)
from .estimator import (
    CoinSource,
    EstimateOutcome,
    EstimatorConfig,
    RandomCoins,
    ReplayCoins,
    draw,
    factory_coin,
    psi_value,
    run_factory,
    run_replicates,
)
from .mixing import (
    hyper_weight,
    hyper_weight_exact,
    identity_residual,
    increment,
    increment_exact,
    mixed_coefficient,
    mixed_coefficient_exact,
    support,
)
from .oracle import (
    BracketResult,
    conditional_row_mean_exact,
    dual_weight_exact,
    expected_estimate_given_budget,
    subset_weight_exact,
    truncated_expectation_bracket,
    verify_conditional_row_means,
    verify_estimate_conditional_mean,
    verify_increment_signs,
    verify_mixing_weights,
    verify_start_bound,
)
from .report import CheckResult, OracleReport
from .truncation import TruncationLaw, hurwitz_zeta, hurwitz_zeta_bracket

__version__ = "0.1.0"

__all__ = [
    "BernsteinPolynomial",
    "BracketResult",
    "CertificationError",
    "CheckResult",
    "CoefficientScheme",
    "CoinSource",
    "DivergenceError",
    "DomainError",
    "EstimateOutcome",
    "EstimatorConfig",
    "FactoryError",
    "FunctionSpec",
    "OracleReport",
    "PRESET_LABELS",
    "RandomCoins",
    "ReplayCoins",
    "ReplayExhaustedError",
    "SchemeValidationError",
    "TableFormatError",
    "TruncationCapError",
    "TruncationLaw",
    "WindowError",
    "bernstein_eval",
    "bernstein_eval_exact",
    "conditional_row_mean_exact",
    "draw",
    "dual_weight_exact",
    "expected_estimate_given_budget",
    "factory_coin",
    "hurwitz_zeta",
    "hurwitz_zeta_bracket",
    "hyper_weight",
    "hyper_weight_exact",
    "identity_residual",
    "increment",
    "increment_exact",
    "load_coefficient_table",
    "lower_coeff",
    "lower_coeff_exact",
    "lower_polynomial",
    "min_support_index",
    "mixed_coefficient",
    "mixed_coefficient_exact",
    "preset",
    "psi_value",
    "run_factory",
    "run_replicates",
    "save_coefficient_table",
    "scheme_from_function",
    "subset_weight_exact",
    "support",
    "truncated_expectation_bracket",
    "upper_coeff",
    "upper_coeff_exact",
    "upper_polynomial",
    "validate_consistency",
    "verify_conditional_row_means",
    "verify_estimate_conditional_mean",
    "verify_increment_signs",
    "verify_mixing_weights",
    "verify_start_bound",
    "__version__",
]
