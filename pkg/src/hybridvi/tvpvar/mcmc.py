"""Gibbs sampler for one TVP-VAR equation, used as the exact-posterior oracle.

Each sweep draws, in turn:

1. ``etatilde | h, theta`` by forward filtering and backward sampling;
2. ``h | etatilde, theta`` with the seven-component mixture sampler;
3. ``alpha = (eta0, sqrt_v) | etatilde, h, chi, xi`` from its Gaussian conditional;
4. the horseshoe scales ``chi, nu, xi, kappa`` from inverse-gamma conditionals;
5. ``hbar``, ``rho_probit`` and ``log sigma2`` by scalar random-walk
   Metropolis-Hastings with scales adapted during burn-in.

Stored draws are mapped back to the unconstrained ``theta`` used by the
variational approximation and sign-canonicalized (see :func:`canonical_sign`).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import betaln, log_ndtr

from ..diagnostics import ess_table
from .design import EquationDesign, TVPVARData, TVPVARLatent, TVPVARParams, build_design, canonical_sign, theta_names
from .model import HBAR_PRIOR_VAR, LOG_2PI, RHO_BETA, initial_latent, initial_theta
from .samplers import ffbs_eta, sample_h_ksc

logger = logging.getLogger(__name__)

VOL_NAMES = ("hbar", "rho_probit", "log_sigma2")


@dataclass(frozen=True)
class TVPVARMCMCConfig:
    n_sweeps: int
    burn_in: float = 0.5
    max_draws: int = 5000
    adapt_window: int = 50
    adapt_factor: float = 1.5
    target_low: float = 0.20
    target_high: float = 0.40
    initial_scale: float = 0.1

    def __post_init__(self):
        if self.n_sweeps < 0:
            raise ValueError("n_sweeps must be non-negative")
        if not 0.0 <= self.burn_in < 1.0:
            raise ValueError("burn_in must lie in [0, 1)")
        if self.max_draws < 1 or self.adapt_window < 1:
            raise ValueError("max_draws and adapt_window must be positive")


@dataclass
class TVPVARChain:
    names: list
    theta_draws: np.ndarray
    h_mean: np.ndarray
    vol_mean: np.ndarray
    eta_tilde_mean: np.ndarray
    coef_mean: np.ndarray
    acceptance: np.ndarray
    scales: np.ndarray
    final_theta: np.ndarray
    final_latent: TVPVARLatent
    n_sweeps: int
    n_burn: int
    thin: int
    adapt_history: list = field(default_factory=list)

    @property
    def theta_mean(self) -> np.ndarray:
        return self.theta_draws.mean(axis=0)

    @property
    def theta_sd(self) -> np.ndarray:
        return self.theta_draws.std(axis=0, ddof=1)

    def latent_mean(self) -> TVPVARLatent:
        return TVPVARLatent(self.h_mean.copy(), self.eta_tilde_mean.copy())

    def ess(self) -> pd.DataFrame:
        return ess_table(self.theta_draws, self.names)

    def acceptance_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"parameter": list(VOL_NAMES), "acceptance": self.acceptance, "scale": self.scales})


def _inv_gamma(shape, scale, rng: np.random.Generator):
    return scale / rng.gamma(shape, 1.0, size=np.shape(scale))


def horseshoe_gibbs_step(alpha, chi, nu, xi, kappa, rng: np.random.Generator):
    """Conditional draws of the horseshoe scales given ``alpha_j ~ N(0, xi chi_j)``."""
    alpha = np.asarray(alpha, dtype=float)
    chi = _inv_gamma(1.0, 1.0 / nu + alpha**2 / (2.0 * xi), rng)
    nu = _inv_gamma(1.0, 1.0 + 1.0 / chi, rng)
    xi = float(_inv_gamma(0.5 * (alpha.size + 1), 1.0 / kappa + np.sum(alpha**2 / chi) / 2.0, rng))
    kappa = float(_inv_gamma(1.0, 1.0 + 1.0 / xi, rng))
    return chi, nu, xi, kappa


def sample_alpha_gibbs(design: EquationDesign, latent: TVPVARLatent, prior_var: np.ndarray, rng) -> np.ndarray:
    """``alpha | etatilde, h`` for ``y_t = x_t^T alpha + N(0, exp(h_t))`` and ``alpha ~ N(0, diag(prior_var))``."""
    X = design.regressors(latent.eta_tilde)
    w = np.exp(-latent.h)
    prec = (X * w[:, None]).T @ X + np.diag(1.0 / prior_var)
    chol = np.linalg.cholesky(prec)
    rhs = X.T @ (w * design.y)
    mean = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
    return mean + np.linalg.solve(chol.T, rng.standard_normal(prec.shape[0]))


def log_volatility_target(h: np.ndarray, hbar: float, rho_probit: float, sigma2_log: float) -> float:
    """``log p(h | hbar, rho, sigma2)`` plus the priors of the three on the unconstrained scale."""
    params = TVPVARParams(np.zeros(0), np.zeros(0), 0.0, np.zeros(0), 0.0, hbar, rho_probit, sigma2_log)
    rho, sigma2 = params.rho, params.sigma2
    s2 = sigma2 / params.one_minus_rho_sq
    dev = h - hbar
    e = dev[1:] - rho * dev[:-1]
    val = -0.5 * (LOG_2PI + np.log(s2) + dev[0] ** 2 / s2)
    val -= 0.5 * ((h.size - 1) * (LOG_2PI + sigma2_log) + np.sum(e**2) / sigma2)
    a, b = RHO_BETA
    val -= 0.5 * hbar**2 / HBAR_PRIOR_VAR
    val += -betaln(a, b) + (a - 1) * log_ndtr(rho_probit) + (b - 1) * log_ndtr(-rho_probit) - 0.5 * rho_probit**2
    val += 0.5 * sigma2_log - 0.5 * sigma2
    return float(val)


def mcmc_equation(
    design: EquationDesign,
    config: TVPVARMCMCConfig,
    rng: np.random.Generator,
    theta0: np.ndarray | None = None,
    latent0: TVPVARLatent | None = None,
) -> TVPVARChain:
    q, J = design.q, design.J
    theta = initial_theta(design) if theta0 is None else np.array(theta0, dtype=float)
    z = initial_latent(design) if latent0 is None else latent0.copy()
    p0 = TVPVARParams.from_vector(theta, J)
    alpha, chi, nu, xi, kappa = p0.alpha, p0.chi, p0.nu, p0.xi, p0.kappa
    vol = np.array([p0.hbar, p0.rho_probit, p0.sigma2_log])

    n_burn = int(config.burn_in * config.n_sweeps)
    n_post = config.n_sweeps - n_burn
    thin = max(1, -(-n_post // config.max_draws))
    scales = np.full(3, config.initial_scale)
    window_acc = np.zeros(3)
    post_acc = np.zeros(3)
    history = []
    kept = []
    sums = {k: np.zeros((design.T,) + s) for k, s in (("h", ()), ("vol", ()), ("eta", (q,)), ("coef", (q,)))}

    def current_params():
        return TVPVARParams(
            alpha / np.sqrt(xi * chi), np.log(chi), float(np.log(xi)), np.log(nu), float(np.log(kappa)), *map(float, vol)
        )

    for sweep in range(1, config.n_sweeps + 1):
        params = current_params()
        z = TVPVARLatent(z.h, ffbs_eta(design, params, z.h, rng))
        z = TVPVARLatent(sample_h_ksc(design, params, z.eta_tilde, z.h, rng), z.eta_tilde)
        alpha = sample_alpha_gibbs(design, z, xi * chi, rng)
        chi, nu, xi, kappa = horseshoe_gibbs_step(alpha, chi, nu, xi, kappa, rng)

        current = log_volatility_target(z.h, *vol)
        for j in range(3):
            proposal = vol.copy()
            proposal[j] += scales[j] * rng.standard_normal()
            cand = log_volatility_target(z.h, *proposal)
            if np.log(rng.random()) < cand - current:
                vol, current = proposal, cand
                if sweep <= n_burn:
                    window_acc[j] += 1
                else:
                    post_acc[j] += 1

        if sweep <= n_burn:
            if sweep % config.adapt_window == 0:
                rate = window_acc / config.adapt_window
                scales = np.where(rate > config.target_high, scales * config.adapt_factor, scales)
                scales = np.where(rate < config.target_low, scales / config.adapt_factor, scales)
                history.append(rate)
                window_acc[:] = 0
            continue

        theta = current_params().to_vector()
        theta_c, eta_c = canonical_sign(theta, z.eta_tilde, q)
        sums["h"] += z.h
        sums["vol"] += np.exp(z.h / 2.0)
        sums["eta"] += eta_c
        sums["coef"] += alpha[:q] + alpha[q:] * z.eta_tilde
        if (sweep - n_burn) % thin == 0:
            kept.append(theta_c)

    theta = current_params().to_vector()
    if not np.all(np.isfinite(theta)):
        raise FloatingPointError("TVP-VAR chain produced non-finite parameters")
    denom = max(n_post, 1)
    means = {k: v / denom for k, v in sums.items()}
    if not n_post:
        means = {"h": z.h.copy(), "vol": np.exp(z.h / 2.0), "eta": z.eta_tilde.copy()}
        means["coef"] = alpha[:q] + alpha[q:] * z.eta_tilde
    chain = TVPVARChain(
        names=theta_names(q),
        theta_draws=np.array(kept).reshape(-1, 3 * J + 5),
        h_mean=means["h"],
        vol_mean=means["vol"],
        eta_tilde_mean=means["eta"],
        coef_mean=means["coef"],
        acceptance=post_acc / denom,
        scales=scales,
        final_theta=theta,
        final_latent=z,
        n_sweeps=config.n_sweeps,
        n_burn=n_burn,
        thin=thin,
        adapt_history=history,
    )
    if n_post and np.any((chain.acceptance < 0.05) | (chain.acceptance > 0.6)):
        logger.warning("equation %d: volatility MH acceptance %s", design.i, chain.acceptance)
    return chain


def mcmc_tvpvar(data: TVPVARData, config: TVPVARMCMCConfig, rng: np.random.Generator) -> list[TVPVARChain]:
    """Run :func:`mcmc_equation` for every equation in turn."""
    return [mcmc_equation(build_design(data, i), config, rng) for i in range(data.N)]
