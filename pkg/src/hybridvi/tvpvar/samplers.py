"""Exact conditional samplers for the latent states of one TVP-VAR equation.

* ``etatilde | h, theta``: forward Kalman filter and backward sampling.
* ``h | etatilde, theta``: the seven-component normal mixture approximation
  to ``log eps^2`` (Kim, Shephard and Chib, 1998), drawing the mixture
  indicators and then the whole path by forward filtering and backward
  sampling on the linear AR(1) state space.
"""

from __future__ import annotations

import numpy as np

from .design import EquationDesign, TVPVARLatent, TVPVARParams, residuals

RESIDUAL_OFFSET = 1e-6

KSC_WEIGHTS = np.array([0.00730, 0.10556, 0.00002, 0.04395, 0.34001, 0.24566, 0.25750])
KSC_MEANS = np.array([-10.12999, -3.97281, -8.56686, 2.77786, 0.61942, 1.79518, -1.08819]) - 1.2704
KSC_VARIANCES = np.array([5.79596, 2.61369, 5.17950, 0.16735, 0.64009, 0.34023, 1.26261])


class FilterCovarianceError(np.linalg.LinAlgError):
    """The Kalman filter covariance lost positive definiteness."""


def kalman_filter_states(
    xtilde: np.ndarray, sqrt_v: np.ndarray, obs: np.ndarray, obs_var: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Filtered means ``(T, q)`` and covariances ``(T, q, q)`` for the random-walk states.

    Model: ``obs_t = (xtilde_t * sqrt_v)^T s_t + N(0, obs_var_t)``,
    ``s_t = s_{t-1} + N(0, I)`` with ``s_{-1} = 0``.
    """
    T, q = xtilde.shape
    loadings = xtilde * sqrt_v
    eye = np.eye(q)
    means = np.empty((T, q))
    covs = np.empty((T, q, q))
    m = np.zeros(q)
    P = np.zeros((q, q))
    for t in range(T):
        P = P + eye
        a = loadings[t]
        Pa = P @ a
        s = a @ Pa + obs_var[t]
        gain = Pa / s
        m = m + gain * (obs[t] - a @ m)
        P = P - np.outer(gain, Pa)
        P = 0.5 * (P + P.T)
        means[t] = m
        covs[t] = P
    return means, covs


def ffbs_eta(
    design: EquationDesign,
    params: TVPVARParams,
    h: np.ndarray,
    rng: np.random.Generator,
    n_draws: int | None = None,
) -> np.ndarray:
    """Joint draw(s) of ``etatilde_{0:T}`` given ``h`` and ``theta``.

    Returns ``(T, q)``, or ``(n_draws, T, q)`` when ``n_draws`` is given.
    """
    q = design.q
    obs = design.y - design.xtilde @ params.eta0
    means, covs = kalman_filter_states(design.xtilde, params.sqrt_v, obs, np.exp(h))
    # backward gains C_t = P_t (P_t + I)^-1; the conditional covariance equals C_t
    eye = np.eye(q)
    gains = np.linalg.solve(covs + eye, covs).transpose(0, 2, 1)
    gains = 0.5 * (gains + gains.transpose(0, 2, 1))
    try:
        chol_last = np.linalg.cholesky(covs[-1])
        chols = np.linalg.cholesky(gains[:-1] + 1e-14 * eye)
    except np.linalg.LinAlgError as exc:
        raise FilterCovarianceError("state covariance is not positive definite") from exc

    size = 1 if n_draws is None else n_draws
    T = design.T
    noise = rng.standard_normal((T, size, q))
    out = np.empty((T, size, q))
    out[-1] = means[-1] + noise[-1] @ chol_last.T
    for t in range(T - 2, -1, -1):
        out[t] = means[t] + (out[t + 1] - means[t]) @ gains[t].T + noise[t] @ chols[t].T
    out = out.transpose(1, 0, 2)
    return out[0] if n_draws is None else out


def sample_mixture_indicators(resid_log_sq: np.ndarray, h: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Component of the seven-normal mixture for each time point, given ``h``."""
    dev = resid_log_sq[:, None] - h[:, None] - KSC_MEANS
    logp = np.log(KSC_WEIGHTS) - 0.5 * np.log(KSC_VARIANCES) - 0.5 * dev**2 / KSC_VARIANCES
    prob = np.exp(logp - logp.max(axis=1, keepdims=True))
    cum = np.cumsum(prob, axis=1)
    u = rng.random(h.size) * cum[:, -1]
    return np.minimum((cum < u[:, None]).sum(axis=1), KSC_WEIGHTS.size - 1)


def ffbs_ar1(
    obs: np.ndarray,
    obs_var: np.ndarray,
    hbar: float,
    rho: float,
    sigma2: float,
    init_var: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw ``h`` for ``obs_t = h_t + N(0, obs_var_t)`` with an AR(1) prior.

    ``h_0 ~ N(hbar, init_var)`` and ``h_t = hbar + rho (h_{t-1} - hbar) + N(0, sigma2)``.
    """
    T = obs.size
    means = np.empty(T)
    variances = np.empty(T)
    m, P = hbar, init_var
    for t in range(T):
        if t > 0:
            m = hbar + rho * (m - hbar)
            P = rho * rho * P + sigma2
        gain = P / (P + obs_var[t])
        m = m + gain * (obs[t] - m)
        P = P * (1.0 - gain)
        means[t], variances[t] = m, P

    noise = rng.standard_normal(T)
    h = np.empty(T)
    h[-1] = means[-1] + np.sqrt(variances[-1]) * noise[-1]
    for t in range(T - 2, -1, -1):
        P = variances[t]
        denom = rho * rho * P + sigma2
        gain = rho * P / denom if denom > 1e-300 else 0.0
        mean = means[t] + gain * (h[t + 1] - hbar - rho * (means[t] - hbar))
        var = max(P - gain * rho * P, 0.0)
        h[t] = mean + np.sqrt(var) * noise[t]
    return h


def sample_h_ksc(
    design: EquationDesign,
    params: TVPVARParams,
    eta_tilde: np.ndarray,
    h: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Mixture indicators given the current ``h``, then a fresh path of ``h``."""
    e = residuals(design, params, eta_tilde)
    resid_log_sq = np.log(e**2 + RESIDUAL_OFFSET)
    comp = sample_mixture_indicators(resid_log_sq, h, rng)
    init_var = params.sigma2 / params.one_minus_rho_sq
    return ffbs_ar1(
        resid_log_sq - KSC_MEANS[comp],
        KSC_VARIANCES[comp],
        params.hbar,
        params.rho,
        params.sigma2,
        init_var,
        rng,
    )


def sample_latent_tvpvar(
    design: EquationDesign,
    params: TVPVARParams,
    latent: TVPVARLatent,
    n_sweeps: int,
    rng: np.random.Generator,
) -> TVPVARLatent:
    """``n_sweeps`` alternations of the ``etatilde`` and ``h`` conditional draws.

    ``etatilde`` is drawn first.  It is non-centered, so a state carried over
    from a different ``theta`` implies a rescaled (or sign-flipped)
    coefficient path; conditioning ``h`` on it would inflate the residuals
    and bias ``h`` upward when few sweeps are used.  ``h`` does not depend on
    ``theta`` in that way.
    """
    h, eta = latent.h, latent.eta_tilde
    for _ in range(n_sweeps):
        eta = ffbs_eta(design, params, h, rng)
        h = sample_h_ksc(design, params, eta, h, rng)
    if n_sweeps == 0:
        return latent
    return TVPVARLatent(h, eta)
