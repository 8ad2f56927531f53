"""Mixture-of-hazards survival regression with per-cluster variable selection.

Fits a truncated Dirichlet-process mixture of constant-baseline proportional
hazards models; within each latent cluster the significant covariates are
found by a screened stochastic model search under a non-local slab prior.
"""

from .dataset import (
    CoefficientVector,
    EMPTY_COEF,
    EMPTY_MODEL,
    ModelIndex,
    StandardizeTransform,
    SurvivalDataset,
    linear_predictor,
    log_likelihood,
    martingale_residuals,
    scale_design,
    standardize_design,
    survival_probability,
)
from .errors import ConfigError, DataError, NumericalError, SurvmixError
from .metrics import (
    SelectionReport,
    concordance_index,
    l1_error,
    match_clusters,
    nmi,
    selection_metrics,
)
from .priors import (
    ImomHyper,
    MixtureWeights,
    ModelPriorHyper,
    imom_log_density,
    imom_log_density_grad,
    model_log_prior,
    sample_mixture_weights,
    stick_breaking_weights,
)
from .sampler import (
    FitConfig,
    FitResult,
    MixtureFitState,
    estimate_khat,
    fit,
    gibbs_sweep,
    sample_assignments,
    step_rng,
)
from .search import (
    ClusterShard,
    ModelFitError,
    ModelScore,
    SearchConfig,
    SearchResult,
    fit_map_coefficients,
    log_laplace_model_score,
    neighborhoods,
    s5_search,
    screen_variables,
)
from .simulate import (
    SimScenario,
    SimTruth,
    calibrate_censoring,
    gen_coefficients,
    gen_design,
    gen_event_times,
    simulate,
)

__version__ = "0.1.0"
