"""Time-varying parameter VAR with stochastic volatility, estimated equation by equation."""

from .design import (
    EquationDesign,
    TVPVARData,
    TVPVARLatent,
    TVPVARParams,
    build_design,
    canonical_sign,
    theta_names,
)
from .mcmc import TVPVARChain, TVPVARMCMCConfig, horseshoe_gibbs_step, mcmc_equation, mcmc_tvpvar
from .model import (
    TVPVARAugmentedPosterior,
    TVPVARModel,
    grad_log_g_latent,
    grad_log_g_tvpvar,
    initial_latent,
    initial_theta,
    log_g_tvpvar,
)
from .predictive import GridUnderflowWarning, log_predictive_density, predictive_density, predictive_kl
from .recover import recover_paths, recover_var_coefficients, to_equation_form
from .samplers import KSC_MEANS, KSC_VARIANCES, KSC_WEIGHTS, ffbs_eta, sample_h_ksc, sample_latent_tvpvar
from .simulate import TVPVARSimSpec, TVPVARTruth, simulate_tvpvar

__all__ = [
    "EquationDesign",
    "GridUnderflowWarning",
    "KSC_MEANS",
    "KSC_VARIANCES",
    "KSC_WEIGHTS",
    "TVPVARAugmentedPosterior",
    "TVPVARChain",
    "TVPVARData",
    "TVPVARLatent",
    "TVPVARMCMCConfig",
    "TVPVARModel",
    "TVPVARParams",
    "TVPVARSimSpec",
    "TVPVARTruth",
    "build_design",
    "canonical_sign",
    "ffbs_eta",
    "grad_log_g_latent",
    "grad_log_g_tvpvar",
    "horseshoe_gibbs_step",
    "initial_latent",
    "initial_theta",
    "log_g_tvpvar",
    "log_predictive_density",
    "mcmc_equation",
    "mcmc_tvpvar",
    "predictive_density",
    "predictive_kl",
    "recover_paths",
    "recover_var_coefficients",
    "sample_h_ksc",
    "sample_latent_tvpvar",
    "simulate_tvpvar",
    "theta_names",
    "to_equation_form",
]
