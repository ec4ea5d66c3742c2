"""Tree-ensemble causal inference with linear and trend baselines."""

from .bart import (
    BartHyperparams,
    BartPosterior,
    fast_profile,
    fit_bart_continuous,
    fit_bart_probit,
    predict_posterior,
)
from .causal import (
    CausalConfig,
    CausalReport,
    CausalResult,
    PropensityScores,
    augment_with_ps,
    counterfactual_matrices,
    fit_propensity,
    hdi,
    individual_effects,
    rhat,
    rmse,
    run_causal,
    summarize,
    support_rule_chisq,
    support_rule_sd,
    tmle_adjust,
)
from .dataset import (
    ColumnSpec,
    Dataset,
    DesignMatrix,
    binarize_outcome,
    delta_outcome,
    encode_design_matrix,
    load_dataset,
    load_schema,
    rescale_weights,
)
from .errors import (
    BootstrapError,
    CausalTreesError,
    CellError,
    FitError,
    IncompleteData,
    ModelError,
    RankError,
    SchemaError,
    SchemaMismatch,
    SeparationError,
    SupportError,
    TmleError,
    UsageError,
    WeightError,
)
from .linear import LinearFit, effect_ci, fit_weighted_gaussian, fit_weighted_logistic
from .trends import (
    GatewaySimConfig,
    TrendFit,
    TrendSeries,
    average_annual_decline,
    bootstrap_prediction_interval,
    fit_exp_decay,
    nyts_ecig_series,
    nyts_smoking_series,
    simulate_gateway,
)

__version__ = "0.1.0"
