"""Per-equation variational fits and posterior path summaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..benchmarks import AugmentedGaussianVA, fit_augmented_benchmark
from ..families import GaussianCopulaVA, GaussianFactorVA
from ..sga import FitConfig, run_sga
from .design import EquationDesign, TVPVARLatent, TVPVARParams, canonical_sign
from .mcmc import TVPVARChain
from .model import TVPVARAugmentedPosterior, TVPVARModel, initial_latent, initial_theta


@dataclass
class PathSummary:
    """Posterior means used for plots and the predictive diagnostic.

    ``theta_mean`` and ``eta_tilde_mean`` are sign-canonicalized;
    ``coef_mean`` holds the time-varying coefficients ``eta0 + sqrt_v * etatilde_t``.
    """

    theta_mean: np.ndarray
    h_mean: np.ndarray
    vol_mean: np.ndarray
    eta_tilde_mean: np.ndarray
    coef_mean: np.ndarray

    def params(self) -> TVPVARParams:
        return TVPVARParams.from_vector(self.theta_mean, (self.theta_mean.size - 5) // 3)

    def latent(self) -> TVPVARLatent:
        return TVPVARLatent(self.h_mean.copy(), self.eta_tilde_mean.copy())

    @classmethod
    def from_chain(cls, chain: TVPVARChain) -> "PathSummary":
        return cls(chain.theta_mean, chain.h_mean, chain.vol_mean, chain.eta_tilde_mean, chain.coef_mean)


class _Accumulator:
    def __init__(self, q: int):
        self.q = q
        self.n = 0
        self.sums = None

    def add(self, theta: np.ndarray, latent: TVPVARLatent):
        q = self.q
        theta_c, eta_c = canonical_sign(theta, latent.eta_tilde, q)
        alpha = TVPVARParams.from_vector(theta, 2 * q).alpha
        values = (theta_c, latent.h, np.exp(latent.h / 2.0), eta_c, alpha[:q] + alpha[q:] * latent.eta_tilde)
        if self.sums is None:
            self.sums = [np.zeros_like(v) for v in values]
        for s, v in zip(self.sums, values):
            s += v
        self.n += 1

    def summary(self) -> PathSummary:
        return PathSummary(*(s / self.n for s in self.sums))


def initial_hybrid_va(design: EquationDesign, k: int = 3, family: str = "gaussian", d0: float = 0.01):
    cls = {"gaussian": GaussianFactorVA, "copula": GaussianCopulaVA}[family]
    return cls.initial(design.dim_theta, k, mu=initial_theta(design), d0=d0)


def fit_hybrid_equation(design: EquationDesign, config: FitConfig, k: int = 3, family: str = "gaussian", va=None):
    """Hybrid approximation ``q0(theta) p(h, etatilde | theta, y)`` for one equation."""
    model = TVPVARModel(design)
    va = initial_hybrid_va(design, k, family) if va is None else va
    return run_sga(model, va, config)


def hybrid_path_summary(
    design: EquationDesign, va, latent: TVPVARLatent, n_draws: int, n_sweeps: int, rng: np.random.Generator
) -> PathSummary:
    """Monte Carlo means under the hybrid approximation.

    Each draw takes ``theta ~ q0`` and advances the latent state by
    ``n_sweeps`` conditional sweeps from the previous draw's state.
    ``theta_mean`` is the mean of the sign-canonicalized ``theta`` draws.
    """
    model = TVPVARModel(design)
    acc = _Accumulator(design.q)
    z = latent
    for _ in range(n_draws):
        theta = va.sample_reparam(va.draw_epsilon(rng)).theta
        z = model.sample_latent(theta, z, n_sweeps, rng)
        acc.add(theta, z)
    return acc.summary()


def initial_augmented_va(design: EquationDesign, head_k: int = 0, unit_k: int = 0, d0: float = 0.01):
    post = TVPVARAugmentedPosterior(design)
    return AugmentedGaussianVA.initial(
        design.dim_theta,
        head_k,
        design.T,
        post.unit_dim,
        unit_k,
        head_mu=initial_theta(design),
        unit_mu=initial_latent(design).to_units(),
        d0=d0,
    )


def fit_augmented_equation(design: EquationDesign, config: FitConfig, head_k: int = 0, unit_k: int = 0):
    """Gaussian approximation to the joint posterior of ``theta`` and the latent paths.

    With ``head_k = unit_k = 0`` this is the mean-field benchmark.
    """
    post = TVPVARAugmentedPosterior(design)
    return fit_augmented_benchmark(post.grad, initial_augmented_va(design, head_k, unit_k), config)


def augmented_path_summary(design: EquationDesign, va: AugmentedGaussianVA, n_draws: int, rng) -> PathSummary:
    post = TVPVARAugmentedPosterior(design)
    acc = _Accumulator(design.q)
    for psi in va.sample(rng, n_draws):
        _, latent = post.split(psi)
        acc.add(psi[: design.dim_theta], latent)
    return acc.summary()
