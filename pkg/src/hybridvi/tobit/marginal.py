"""Posterior of ``(theta, alpha)`` with the censored utilities integrated out.

The augmented-posterior benchmarks work on this density: each censored cell
contributes ``log Phi(-eta / sigma)`` and each observed cell a normal
log-density, plus the random-effect and parameter priors.  The stacked
vector is ``psi = (theta, alpha_1, ..., alpha_N)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr
from scipy.stats import norm

from ..factor import woodbury_inverse, woodbury_logdet
from .metrics import rmse_metric
from .model import (
    LOG_2PI,
    TobitData,
    TobitParams,
    TobitPrior,
    _grad_prior,
    _linear_predictor,
    _log_prior,
    _pack_gradient,
    _random_effect_gradient,
    assemble_v_alpha,
    theta_size,
)


@dataclass(eq=False)
class TobitMarginalPosterior:
    data: TobitData
    k_alpha: int = 1
    prior: TobitPrior = field(default_factory=TobitPrior)

    @property
    def dim_theta(self) -> int:
        return theta_size(self.data.p, self.data.r, self.k_alpha)

    @property
    def dim(self) -> int:
        return self.dim_theta + self.data.N * self.data.r

    def split(self, psi: np.ndarray) -> tuple[TobitParams, np.ndarray]:
        m = self.dim_theta
        params = TobitParams.from_vector(psi[:m], self.data.p, self.data.r, self.k_alpha)
        return params, psi[m:].reshape(self.data.N, self.data.r)

    def log_density(self, psi: np.ndarray) -> float:
        """Unnormalized ``log p(theta, alpha | y)`` (all prior constants included)."""
        params, alpha = self.split(psi)
        d = self.data
        eta = _linear_predictor(d.X, d.W, params.beta, alpha)
        prec_sd = np.exp(params.c)
        cens = d.censored
        lc = np.sum(log_ndtr(-eta[cens] * prec_sd))
        resid = d.y[~cens] - eta[~cens]
        lo = np.sum(params.c - 0.5 * LOG_2PI - 0.5 * prec_sd**2 * resid**2)
        V = assemble_v_alpha(params)
        S = alpha.T @ alpha
        la = -0.5 * (d.N * d.r * LOG_2PI + d.N * woodbury_logdet(V) + np.sum(woodbury_inverse(V) * S))
        return float(lc + lo + la + _log_prior(params, self.prior))

    def grad(self, psi: np.ndarray) -> np.ndarray:
        params, alpha = self.split(psi)
        d = self.data
        eta = _linear_predictor(d.X, d.W, params.beta, alpha)
        prec_sd = np.exp(params.c)
        cens = d.censored
        score_eta = np.empty_like(eta)
        g_c = 0.0
        x = -eta[cens] * prec_sd
        mills = np.exp(norm.logpdf(x) - log_ndtr(x))
        score_eta[cens] = -prec_sd * mills
        g_c += np.sum(x * mills)
        resid = d.y[~cens] - eta[~cens]
        score_eta[~cens] = prec_sd**2 * resid
        g_c += np.sum(1.0 - prec_sd**2 * resid**2)
        g_beta = np.einsum("nt,ntp->p", score_eta, d.X)
        Vinv = woodbury_inverse(assemble_v_alpha(params))
        g_alpha = np.einsum("nt,ntr->nr", score_eta, d.W) - alpha @ Vinv
        g_L, g_xi = _random_effect_gradient(params, alpha)
        g_theta = _pack_gradient(params, g_beta, g_xi, g_c, g_L) + _grad_prior(params, self.prior)
        return np.concatenate([g_theta, g_alpha.ravel()])

    def rmse(self, psi: np.ndarray) -> float:
        params, alpha = self.split(psi)
        return rmse_metric(self.data, alpha, params)
