"""Accuracy diagnostics: gradient checking, ELBO estimation, ESS and 1-D KL."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import pandas as pd


@dataclass(frozen=True)
class GradCheckReport:
    analytic: np.ndarray
    numeric: np.ndarray
    rel_error: np.ndarray
    step: np.ndarray
    tol: float

    @property
    def flagged(self) -> np.ndarray:
        """Indices of coordinates whose relative error exceeds ``tol``."""
        return np.flatnonzero(~(self.rel_error <= self.tol))

    @property
    def passed(self) -> bool:
        return self.flagged.size == 0

    @property
    def max_rel_error(self) -> float:
        return float(np.max(self.rel_error)) if self.rel_error.size else 0.0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "coordinate": np.arange(self.analytic.size),
                "analytic": self.analytic,
                "numeric": self.numeric,
                "rel_error": self.rel_error,
                "step": self.step,
                "flagged": ~(self.rel_error <= self.tol),
            }
        )


def grad_check(
    f: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    point: np.ndarray,
    tol: float = 1e-4,
    rel_step: float = 1e-7,
    min_step: float = 1e-6,
    scale_floor: float = 1.0,
) -> GradCheckReport:
    """Compare ``grad(point)`` against central differences of ``f``.

    The step for coordinate ``i`` is ``max(min_step, rel_step * |x_i|)``.  The
    error is ``|analytic - numeric| / max(|analytic|, |numeric|, scale_floor)``,
    so coordinates whose gradient is much smaller than one are judged on an
    absolute scale, where cancellation in ``f`` dominates the difference quotient.
    """
    x = np.asarray(point, dtype=float)
    analytic = np.asarray(grad(x), dtype=float)
    steps = np.maximum(min_step, rel_step * np.abs(x))
    numeric = np.empty_like(x)
    for i, h in enumerate(steps):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        numeric[i] = (f(xp) - f(xm)) / (2.0 * h)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), scale_floor)
    return GradCheckReport(analytic, numeric, np.abs(analytic - numeric) / denom, steps, tol)


class DegenerateChainWarning(UserWarning):
    """The chain has zero variance, so its ESS is reported as 1."""


def _autocorrelation(x: np.ndarray) -> np.ndarray:
    n = x.size
    dev = x - x.mean()
    size = 1 << int(np.ceil(np.log2(2 * n)))
    spec = np.fft.rfft(dev, size)
    acov = np.fft.irfft(spec * np.conj(spec), size)[:n]
    return acov / acov[0]


def effective_sample_size(chain: np.ndarray) -> float:
    """ESS with Geyer's initial positive sequence truncation."""
    x = np.asarray(chain, dtype=float)
    n = x.size
    if n < 2 or np.ptp(x) == 0.0:
        warnings.warn("constant chain; effective sample size reported as 1", DegenerateChainWarning, stacklevel=2)
        return 1.0
    rho = _autocorrelation(x)
    n_pairs = n // 2
    pair_sums = rho[: 2 * n_pairs : 2] + rho[1 : 2 * n_pairs : 2]
    negative = np.flatnonzero(pair_sums <= 0.0)
    stop = negative[0] if negative.size else n_pairs
    tau = -1.0 + 2.0 * np.sum(pair_sums[:stop])
    return float(n / max(tau, 1e-12))


def ess_table(draws: np.ndarray, names=None) -> pd.DataFrame:
    """ESS for every column of a ``(n_draws, n_params)`` chain."""
    draws = np.asarray(draws, dtype=float)
    names = [f"theta_{j}" for j in range(draws.shape[1])] if names is None else list(names)
    ess, degenerate = [], []
    for j in range(draws.shape[1]):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", DegenerateChainWarning)
            ess.append(effective_sample_size(draws[:, j]))
        degenerate.append(any(issubclass(w.category, DegenerateChainWarning) for w in caught))
    return pd.DataFrame({"parameter": names, "ess": ess, "degenerate": degenerate})


def kl_1d(p_grid: np.ndarray, q_grid: np.ndarray, grid: np.ndarray) -> float:
    """Trapezoid-rule ``int p log(p / q)``; cells with ``p < 1e-300`` contribute 0."""
    p = np.asarray(p_grid, dtype=float)
    q = np.asarray(q_grid, dtype=float)
    live = p >= 1e-300
    integrand = np.zeros_like(p)
    with np.errstate(divide="ignore"):
        integrand[live] = p[live] * (np.log(p[live]) - np.log(q[live]))
    return float(np.trapezoid(integrand, grid))


def elbo_estimate(log_g: Callable[[np.ndarray], np.ndarray], va, n_draws: int, rng: np.random.Generator):
    """Monte Carlo ELBO ``E_q[log g - log q]`` and its standard error.

    ``log_g`` and ``va.log_density`` must accept a batch of draws with shape
    ``(n_draws, dim)``.
    """
    draws = va.sample(rng, n_draws)
    vals = np.asarray(log_g(draws), dtype=float) - np.asarray(va.log_density(draws), dtype=float)
    se = float(vals.std(ddof=1) / np.sqrt(n_draws)) if n_draws > 1 else float("nan")
    return float(vals.mean()), se


def standardized_mean_error(mean: np.ndarray, ref_mean: np.ndarray, ref_sd: np.ndarray) -> float:
    """Average of ``|mean - ref_mean| / ref_sd`` over coordinates."""
    mean, ref_mean, ref_sd = (np.asarray(a, dtype=float).ravel() for a in (mean, ref_mean, ref_sd))
    return float(np.mean(np.abs(mean - ref_mean) / ref_sd))


def standardized_moment_error(mean, sd, ref_mean, ref_sd) -> float:
    """Average over coordinates of ``(|mean - ref_mean| + |sd - ref_sd|) / ref_sd``.

    Used to rank approximations by how closely their marginal means and
    standard deviations match a reference (MCMC) posterior; smaller is better.
    """
    mean, sd, ref_mean, ref_sd = (np.asarray(a, dtype=float).ravel() for a in (mean, sd, ref_mean, ref_sd))
    return float(np.mean((np.abs(mean - ref_mean) + np.abs(sd - ref_sd)) / ref_sd))
