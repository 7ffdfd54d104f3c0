"""Log joint density, gradients and the hybrid-VI model wrapper for one TVP-VAR equation.

``log g(theta, z) = log p(y | theta, z) + log p(z | theta) + log p(theta)`` with
all normalizing constants, where ``z = (h, etatilde)`` and the priors are
placed on the unconstrained scale (Jacobians included):

* ``tau ~ N(0, I)``
* ``chi_j | nu_j ~ IG(1/2, 1/nu_j)``, ``nu_j ~ IG(1/2, 1)`` and likewise ``xi | kappa``, ``kappa``
* ``hbar ~ N(0, 10^2)``, ``(rho + 1) / 2 ~ Beta(25, 5)``, ``sigma2 ~ Gamma(1/2, rate 1/2)``
"""

from __future__ import annotations

import numpy as np
import pandas as pd
from scipy.special import betaln, log_ndtr, ndtr

from ..sga import LatentVariableModel
from .design import EquationDesign, TVPVARLatent, TVPVARParams, residuals, theta_names
from .samplers import sample_latent_tvpvar

LOG_2PI = np.log(2.0 * np.pi)
LOG_PI = np.log(np.pi)
HBAR_PRIOR_VAR = 100.0
RHO_BETA = (25.0, 5.0)


def _phi(x: float) -> float:
    return float(np.exp(-0.5 * x * x - 0.5 * LOG_2PI))


def _h_innovations(params: TVPVARParams, h: np.ndarray) -> np.ndarray:
    """``e_t = h_t - hbar - rho (h_{t-1} - hbar)`` for ``t >= 1``."""
    dev = h - params.hbar
    return dev[1:] - params.rho * dev[:-1]


def _eta_increments(eta_tilde: np.ndarray) -> np.ndarray:
    """Random-walk increments with ``etatilde_{-1} = 0``."""
    return np.diff(eta_tilde, axis=0, prepend=np.zeros((1, eta_tilde.shape[1])))


def log_prior_tvpvar(params: TVPVARParams) -> float:
    tau, chi_log, nu_log = params.tau, params.chi_log, params.nu_log
    J = tau.size
    a, b = RHO_BETA
    val = -0.5 * (J * LOG_2PI + tau @ tau)
    # chi | nu and nu, with the log-scale Jacobians
    val += np.sum(-0.5 * nu_log - 0.5 * LOG_PI - 0.5 * chi_log - np.exp(-nu_log - chi_log))
    val += np.sum(-0.5 * LOG_PI - 0.5 * nu_log - np.exp(-nu_log))
    val += -0.5 * params.kappa_log - 0.5 * LOG_PI - 0.5 * params.xi_log - np.exp(-params.kappa_log - params.xi_log)
    val += -0.5 * LOG_PI - 0.5 * params.kappa_log - np.exp(-params.kappa_log)
    val += -0.5 * (np.log(2 * np.pi * HBAR_PRIOR_VAR) + params.hbar**2 / HBAR_PRIOR_VAR)
    r = params.rho_probit
    val += -betaln(a, b) + (a - 1) * log_ndtr(r) + (b - 1) * log_ndtr(-r) - 0.5 * (LOG_2PI + r * r)
    val += 0.5 * np.log(0.5) - 0.5 * LOG_PI + 0.5 * params.sigma2_log - 0.5 * params.sigma2
    return float(val)


def log_g_tvpvar(design: EquationDesign, params: TVPVARParams, latent: TVPVARLatent) -> float:
    h, eta = latent.h, latent.eta_tilde
    T, q = design.T, design.q
    r = residuals(design, params, eta)
    val = -0.5 * (T * LOG_2PI + h.sum() + np.sum(r**2 * np.exp(-h)))
    val += -0.5 * (T * q * LOG_2PI + np.sum(_eta_increments(eta) ** 2))
    s2 = params.sigma2 / params.one_minus_rho_sq
    e = _h_innovations(params, h)
    val += -0.5 * (LOG_2PI + np.log(s2) + (h[0] - params.hbar) ** 2 / s2)
    val += -0.5 * ((T - 1) * (LOG_2PI + params.sigma2_log) + np.sum(e**2) / params.sigma2)
    return float(val + log_prior_tvpvar(params))


def grad_log_g_tvpvar(design: EquationDesign, params: TVPVARParams, latent: TVPVARLatent) -> np.ndarray:
    """Gradient of ``log g`` with respect to the unconstrained ``theta``."""
    h, eta = latent.h, latent.eta_tilde
    if h.shape != (design.T,) or eta.shape != (design.T, design.q):
        raise ValueError("latent shapes do not match the design")
    tau, chi, nu = params.tau, params.chi, params.nu
    xi, kappa, sigma2, rho = params.xi, params.kappa, params.sigma2, params.rho
    weight = residuals(design, params, eta) * np.exp(-h)
    S = np.concatenate([design.xtilde.T @ weight, (design.xtilde * eta).T @ weight])
    scale = np.sqrt(xi * chi)

    g_tau = scale * S - tau
    g_chi = 0.5 * tau * scale * S - 0.5 + 1.0 / (nu * chi)
    g_xi = 0.5 * np.sum(tau * scale * S) - 0.5 + 1.0 / (kappa * xi)
    g_nu = -1.0 + 1.0 / (nu * chi) + 1.0 / nu
    g_kappa = -1.0 + 1.0 / (kappa * xi) + 1.0 / kappa

    one_m = params.one_minus_rho_sq
    s2 = sigma2 / one_m
    d1 = h[0] - params.hbar
    e = _h_innovations(params, h)
    lagged = h[:-1] - params.hbar
    g_hbar = -params.hbar / HBAR_PRIOR_VAR + d1 / s2 - np.sum(e) * (rho - 1.0) / sigma2

    rp = params.rho_probit
    dens = _phi(rp)
    g_rho_natural = rho / one_m * (d1**2 / s2 - 1.0) + np.sum(lagged * e) / sigma2
    a, b = RHO_BETA
    g_rho = 2.0 * dens * g_rho_natural + (a - 1) * dens / ndtr(rp) - (b - 1) * dens / ndtr(-rp) - rp

    g_sigma = -0.5 * sigma2 + d1**2 / (2.0 * s2) + np.sum(-0.5 + e**2 / (2.0 * sigma2))
    return np.concatenate([g_tau, g_chi, [g_xi], g_nu, [g_kappa, g_hbar, g_rho, g_sigma]])


def grad_log_g_latent(design: EquationDesign, params: TVPVARParams, latent: TVPVARLatent) -> np.ndarray:
    """Gradient of ``log g`` with respect to ``(h_t, etatilde_t)``, as a ``(T, 1 + q)`` array."""
    h, eta = latent.h, latent.eta_tilde
    r = residuals(design, params, eta)
    w = np.exp(-h)
    g_h = -0.5 + 0.5 * r**2 * w
    sigma2, rho = params.sigma2, params.rho
    s2 = sigma2 / params.one_minus_rho_sq
    e = _h_innovations(params, h)
    g_h[0] -= (h[0] - params.hbar) / s2
    g_h[1:] -= e / sigma2
    g_h[:-1] += rho * e / sigma2

    d = _eta_increments(eta)
    g_eta = (r * w)[:, None] * design.xtilde * params.sqrt_v - d
    g_eta[:-1] += d[1:]
    return np.column_stack([g_h, g_eta])


def ols_fit(design: EquationDesign) -> tuple[np.ndarray, np.ndarray]:
    """Constant-coefficient least squares; returns ``(coefficients, residuals)``."""
    coef, *_ = np.linalg.lstsq(design.xtilde, design.y, rcond=None)
    return coef, design.y - design.xtilde @ coef


def initial_log_volatility(design: EquationDesign, window: int = 10) -> np.ndarray:
    """Log of a centered rolling mean of squared OLS residuals."""
    _, resid = ols_fit(design)
    var = pd.Series(resid**2).rolling(window, center=True, min_periods=1).mean().to_numpy()
    return np.log(var + 1e-8)


def initial_latent(design: EquationDesign) -> TVPVARLatent:
    return TVPVARLatent(initial_log_volatility(design), np.zeros((design.T, design.q)))


def initial_theta(design: EquationDesign, sqrt_v: float = 0.1) -> np.ndarray:
    """Starting parameters: OLS ``eta0``, small ``sqrt_v``, unit horseshoe scales and a persistent AR(1)."""
    coef, _ = ols_fit(design)
    alpha = np.concatenate([coef, np.full(design.q, sqrt_v)])
    h0 = initial_log_volatility(design)
    J = design.J
    params = TVPVARParams.from_natural(alpha, np.ones(J), 1.0, np.ones(J), 1.0, float(h0.mean()), 0.9, 0.1)
    return params.to_vector()


class TVPVARModel(LatentVariableModel):
    """One equation of the TVP-VAR as a latent-variable model for :func:`run_sga`."""

    def __init__(self, design: EquationDesign):
        self.design = design
        self.dim_theta = design.dim_theta

    @property
    def names(self) -> list[str]:
        return theta_names(self.design.q)

    def params(self, theta: np.ndarray) -> TVPVARParams:
        return TVPVARParams.from_vector(theta, self.design.J)

    def log_g(self, theta: np.ndarray, z: TVPVARLatent) -> float:
        return log_g_tvpvar(self.design, self.params(theta), z)

    def grad_log_g(self, theta: np.ndarray, z: TVPVARLatent) -> np.ndarray:
        return grad_log_g_tvpvar(self.design, self.params(theta), z)

    def sample_latent(self, theta, z, n_sweeps, rng):
        return sample_latent_tvpvar(self.design, self.params(theta), z, n_sweeps, rng)

    def init_latent(self, rng, theta=None):
        return initial_latent(self.design)


class TVPVARAugmentedPosterior:
    """``log g`` over the stacked vector ``psi = (theta, (h_t, etatilde_t) for each t)``.

    Used by the Gaussian benchmarks, which approximate the joint posterior of
    parameters and latent states directly.
    """

    def __init__(self, design: EquationDesign):
        self.design = design
        self.dim_theta = design.dim_theta
        self.unit_dim = 1 + design.q
        self.dim = self.dim_theta + design.T * self.unit_dim

    def split(self, psi: np.ndarray) -> tuple[TVPVARParams, TVPVARLatent]:
        m = self.dim_theta
        params = TVPVARParams.from_vector(psi[:m], self.design.J)
        latent = TVPVARLatent.from_units(psi[m:].reshape(self.design.T, self.unit_dim))
        return params, latent

    def stack(self, theta: np.ndarray, latent: TVPVARLatent) -> np.ndarray:
        return np.concatenate([theta, latent.to_units().ravel()])

    def log_density(self, psi: np.ndarray) -> float:
        return log_g_tvpvar(self.design, *self.split(psi))

    def grad(self, psi: np.ndarray) -> np.ndarray:
        params, latent = self.split(psi)
        return np.concatenate(
            [
                grad_log_g_tvpvar(self.design, params, latent),
                grad_log_g_latent(self.design, params, latent).ravel(),
            ]
        )
