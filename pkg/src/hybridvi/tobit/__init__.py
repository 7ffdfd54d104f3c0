"""Mixed-effects tobit model with censoring at zero."""

from .fit import (
    TobitSummary,
    augmented_tobit_summary,
    fit_augmented_tobit,
    fit_hybrid_tobit,
    hybrid_tobit_summary,
    initial_tobit_va,
)
from .mcmc import TobitChain, TobitMCMCConfig, mcmc_tobit
from .metrics import censored_mean, heterogeneity, rmse_metric
from .model import (
    TobitData,
    TobitLatent,
    TobitModel,
    TobitParams,
    TobitPrior,
    alpha_conditional_moments,
    assemble_v_alpha,
    grad_log_g_tobit,
    grad_log_g_units,
    log_g_tobit,
    sample_alpha_conditional,
    sample_truncated_normal,
    sample_ystar_conditional,
)
from .marginal import TobitMarginalPosterior
from .simulate import simulate_tobit

__all__ = [
    "TobitChain",
    "TobitData",
    "TobitLatent",
    "TobitMCMCConfig",
    "TobitMarginalPosterior",
    "TobitModel",
    "TobitParams",
    "TobitPrior",
    "TobitSummary",
    "alpha_conditional_moments",
    "assemble_v_alpha",
    "augmented_tobit_summary",
    "censored_mean",
    "fit_augmented_tobit",
    "fit_hybrid_tobit",
    "grad_log_g_tobit",
    "grad_log_g_units",
    "heterogeneity",
    "hybrid_tobit_summary",
    "initial_tobit_va",
    "log_g_tobit",
    "mcmc_tobit",
    "rmse_metric",
    "sample_alpha_conditional",
    "sample_truncated_normal",
    "sample_ystar_conditional",
    "simulate_tobit",
]
