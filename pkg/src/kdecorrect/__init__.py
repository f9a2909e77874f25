"""Multivariate Gaussian KDE for correcting measurements through conditional expectations."""

from .bandwidth import (
    BandwidthMatrix,
    BandwidthSpec,
    LocalFactors,
    bandwidth_matrix,
    fixed_bandwidth,
    local_factors,
    plugin_factor,
    selective_bandwidth,
)
from .conditional import (
    ConditionalMixture,
    ConditionalResult,
    condition,
    conditional_expectation,
    conditional_quantile,
    correct,
    correct_batch,
    credible_interval,
    predict_expectation,
)
from .dataset import (
    CovarianceDecomposition,
    Dataset,
    covariance_decomposition,
    load_csv,
    split_train_validation,
    write_csv,
)
from .density import (
    FittedModel,
    fit,
    kde_evaluate,
    kde_log_evaluate,
    kde_loo_evaluate,
    kernel_eval,
    kernel_log_eval,
    squared_integral,
)
from .errors import (
    DataError,
    DegenerateSampleError,
    KDEError,
    NoEvidenceError,
    NumericalError,
    PilotUnderflowError,
)
from .selection import (
    CriterionEvaluator,
    CriterionReport,
    OptimizerConfig,
    golden_section_minimize,
    lscv,
    mcse,
    nelder_mead_minimize,
    select_bandwidth,
)

__version__ = "0.1.0"
