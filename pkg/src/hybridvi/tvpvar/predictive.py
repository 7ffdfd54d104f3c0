"""One-step-ahead predictive densities and their average KL divergence."""

from __future__ import annotations

import warnings

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.special import logsumexp

from .design import EquationDesign, TVPVARLatent, TVPVARParams


class GridUnderflowWarning(UserWarning):
    """The evaluation grid holds less than 0.999 of the predictive mass."""


def predictive_moments(params: TVPVARParams, eta_t: np.ndarray, x_next: np.ndarray) -> tuple[float, float]:
    """Mean and state variance of ``y_{t+1}`` with ``etatilde_{t+1}`` integrated out.

    The state variance excludes the measurement noise ``exp(h_{t+1})``.
    """
    sv = params.sqrt_v
    mean = x_next @ params.eta0 + x_next @ (sv * eta_t)
    return float(mean), float(np.sum((x_next * sv) ** 2))


def log_predictive_density(
    params: TVPVARParams, h_t: float, eta_t: np.ndarray, x_next: np.ndarray, y_grid: np.ndarray, n_quad: int = 40
) -> np.ndarray:
    """``log p(y_{t+1} | theta, h_t, etatilde_t)`` on ``y_grid``.

    The inner density is Gaussian given ``h_{t+1}``; the outer integral over
    ``h_{t+1} ~ N(hbar + rho (h_t - hbar), sigma2)`` uses Gauss-Hermite
    quadrature, which is exact when ``sigma2 = 0``.
    """
    y_grid = np.asarray(y_grid, dtype=float)
    mean, state_var = predictive_moments(params, eta_t, x_next)
    nodes, weights = hermgauss(n_quad)
    h_mean = params.hbar + params.rho * (h_t - params.hbar)
    var = state_var + np.exp(h_mean + np.sqrt(2.0 * params.sigma2) * nodes)
    log_inner = -0.5 * (y_grid[:, None] - mean) ** 2 / var - 0.5 * np.log(2.0 * np.pi * var)
    return logsumexp(log_inner, axis=1, b=weights / np.sqrt(np.pi))


def predictive_density(
    params: TVPVARParams,
    h_t: float,
    eta_t: np.ndarray,
    x_next: np.ndarray,
    y_grid: np.ndarray,
    n_quad: int = 40,
    check_mass: bool = True,
) -> np.ndarray:
    """``p(y_{t+1} | theta, h_t, etatilde_t)`` on ``y_grid``; see :func:`log_predictive_density`."""
    out = np.exp(log_predictive_density(params, h_t, eta_t, x_next, y_grid, n_quad))
    if check_mass and np.size(y_grid) > 1:
        mass = np.trapezoid(out, y_grid)
        if mass < 0.999:
            warnings.warn(f"predictive mass on grid is {mass:.6f}", GridUnderflowWarning, stacklevel=2)
    return out


def predictive_kl(
    design: EquationDesign,
    params_va: TVPVARParams,
    latent_va: TVPVARLatent,
    params_exact: TVPVARParams,
    latent_exact: TVPVARLatent,
    n_grid: int = 2001,
    n_quad: int = 40,
    width: float = 12.0,
) -> float:
    """Average over ``t`` of ``KL(p_VA(y_{t+1} | t) || p_exact(y_{t+1} | t))``.

    Each predictive is evaluated at plug-in parameter and latent values
    (posterior or variational means).  The average runs over the ``T - 1``
    in-sample one-step transitions of the equation.
    """
    T = design.T
    total = 0.0
    for t in range(T - 1):
        x_next = design.xtilde[t + 1]
        centres, spreads = [], []
        for params, latent in ((params_va, latent_va), (params_exact, latent_exact)):
            mean, state_var = predictive_moments(params, latent.eta_tilde[t], x_next)
            h_mean = params.hbar + params.rho * (latent.h[t] - params.hbar)
            h_hi = h_mean + 6.0 * np.sqrt(params.sigma2)
            centres.append(mean)
            spreads.append(np.sqrt(state_var + np.exp(h_hi)))
        half = width * max(spreads)
        grid = np.linspace(min(centres) - half, max(centres) + half, n_grid)
        log_va = log_predictive_density(params_va, latent_va.h[t], latent_va.eta_tilde[t], x_next, grid, n_quad)
        log_ex = log_predictive_density(
            params_exact, latent_exact.h[t], latent_exact.eta_tilde[t], x_next, grid, n_quad
        )
        # log-space integrand: the tails of either density may underflow
        total += float(np.trapezoid(np.exp(log_va) * (log_va - log_ex), grid))
    return total / (T - 1)
