"""Variational fits of the tobit model and posterior summaries shared with MCMC."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..benchmarks import AugmentedGaussianVA, fit_augmented_benchmark
from ..families import GaussianCopulaVA, GaussianFactorVA
from ..posterior import hybrid_conditional_moments
from ..sga import FitConfig, run_sga
from .marginal import TobitMarginalPosterior
from .mcmc import TobitChain
from .model import (
    TobitData,
    TobitModel,
    TobitParams,
    TobitPrior,
    alpha_conditional_moments,
    assemble_v_alpha,
    theta_size,
)

FAMILY_CLASSES = {"gaussian": GaussianFactorVA, "copula": GaussianCopulaVA}


@dataclass
class TobitSummary:
    """Draws of ``theta`` with posterior means and SDs of ``alpha``.

    The same container holds an MCMC chain or a variational approximation so
    that every comparison runs through one code path.
    """

    names: list
    theta_draws: np.ndarray
    alpha_mean: np.ndarray
    alpha_sd: np.ndarray
    p: int
    r: int
    k_alpha: int

    @property
    def theta_mean(self) -> np.ndarray:
        return self.theta_draws.mean(axis=0)

    @property
    def theta_sd(self) -> np.ndarray:
        return self.theta_draws.std(axis=0, ddof=1)

    def params(self, j: int) -> TobitParams:
        return TobitParams.from_vector(self.theta_draws[j], self.p, self.r, self.k_alpha)

    def mean_params(self) -> TobitParams:
        return TobitParams.from_vector(self.theta_mean, self.p, self.r, self.k_alpha)

    def v_alpha_draws(self) -> np.ndarray:
        return np.array([assemble_v_alpha(self.params(j)).dense() for j in range(len(self.theta_draws))])

    @classmethod
    def from_chain(cls, chain: TobitChain) -> "TobitSummary":
        return cls(chain.names, chain.theta_draws, chain.alpha_mean, chain.alpha_sd, chain.p, chain.r, chain.k_alpha)


def initial_tobit_va(data: TobitData, k: int = 3, family: str = "copula", k_alpha: int = 1, d0: float = 0.01):
    """Approximation centred at ``theta = 0`` (the MCMC starting point)."""
    m = theta_size(data.p, data.r, k_alpha)
    return FAMILY_CLASSES[family].initial(m, k, mu=np.zeros(m), d0=d0)


def fit_hybrid_tobit(
    data: TobitData,
    config: FitConfig,
    k: int = 3,
    family: str = "copula",
    k_alpha: int = 1,
    prior: TobitPrior = TobitPrior(),
    va=None,
):
    """Hybrid approximation ``q0(theta) p(alpha, y*_U | theta, y)``; returns ``(va, trace)``."""
    model = TobitModel(data, k_alpha, prior)
    va = initial_tobit_va(data, k, family, k_alpha) if va is None else va
    return run_sga(model, va, config)


def hybrid_tobit_summary(
    data: TobitData,
    va,
    latent,
    n_draws: int,
    n_sweeps: int,
    rng: np.random.Generator,
    k_alpha: int = 1,
    prior: TobitPrior = TobitPrior(),
) -> TobitSummary:
    """``theta`` draws from ``q0``; ``alpha`` moments under ``q0(theta) p(alpha | theta, y)``.

    The ``alpha`` moments average the closed-form conditional moments given
    ``(theta, y*)`` along the latent chain rather than raw ``alpha`` draws.
    """
    model = TobitModel(data, k_alpha, prior)
    theta = va.sample(rng, n_draws)

    def moments(theta_draw, z):
        mean, cov = alpha_conditional_moments(data, model.params(theta_draw), z.ystar)
        return mean, np.diagonal(cov, axis1=1, axis2=2)

    alpha_mean, alpha_sd = hybrid_conditional_moments(model, va, latent, n_draws, n_sweeps, rng, moments)
    return TobitSummary(model.names, theta, alpha_mean, alpha_sd, data.p, data.r, k_alpha)


def fit_augmented_tobit(
    data: TobitData,
    config: FitConfig,
    head_k: int = 0,
    unit_k: int = 0,
    k_alpha: int = 1,
    prior: TobitPrior = TobitPrior(),
    d0: float = 0.01,
):
    """Gaussian approximation to ``p(theta, alpha | y)``; ``head_k = unit_k = 0`` is mean-field."""
    post = TobitMarginalPosterior(data, k_alpha, prior)
    va = AugmentedGaussianVA.initial(post.dim_theta, head_k, data.N, data.r, unit_k, d0=d0)
    return fit_augmented_benchmark(post.grad, va, config, post.rmse)


def augmented_tobit_summary(data: TobitData, va: AugmentedGaussianVA, n_draws: int, rng, k_alpha: int = 1):
    """``theta`` draws from the head block; ``alpha`` moments exactly from the approximation."""
    model = TobitModel(data, k_alpha)
    theta = va.head.sample(rng, n_draws)
    return TobitSummary(model.names, theta, va.unit_mu.copy(), va.unit_sd(), data.p, data.r, k_alpha)
