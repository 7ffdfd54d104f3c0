"""Synthetic TVP-VAR data with stochastic volatility and known paths.

    y_t = beta_{0,t} + sum_s B_{s,t} y_{t-s} + L_t diag(exp(h_t / 2)) eps_t

with random-walk ``beta_{0,t}``, ``B_{s,t}`` and strictly-lower ``L_t``
entries, and an AR(1) log-volatility per series.  Pre-sample lags are zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import TVPVARData


@dataclass(frozen=True)
class TVPVARSimSpec:
    """Starting values and innovation scales; arrays broadcast to the right shapes."""

    intercept: float = 0.1
    own_lag: float = 0.5
    cross_lag: float = 0.1
    impact: float = 0.3
    coef_innov_sd: float = 0.01
    impact_innov_sd: float = 0.01
    hbar: float = -1.0
    rho: float = 0.95
    sigma2: float = 0.1


@dataclass
class TVPVARTruth:
    beta0: np.ndarray
    B: np.ndarray
    L: np.ndarray
    h: np.ndarray


def simulate_tvpvar(
    N: int, T: int, p: int, rng: np.random.Generator, spec: TVPVARSimSpec | None = None
) -> tuple[TVPVARData, TVPVARTruth]:
    spec = TVPVARSimSpec() if spec is None else spec
    lower = np.tril_indices(N, -1)

    beta0 = np.empty((T, N))
    B = np.empty((T, p, N, N))
    L = np.empty((T, N, N))
    start_B = np.zeros((p, N, N))
    start_B[0] = spec.cross_lag * np.ones((N, N)) + (spec.own_lag - spec.cross_lag) * np.eye(N)
    b0, Bt = np.full(N, spec.intercept), start_B
    lt = np.full(lower[0].size, spec.impact)
    h_prev = None
    h = np.empty((T, N))
    y = np.zeros((T, N))
    stationary_sd = np.sqrt(spec.sigma2 / (1.0 - spec.rho**2))
    for t in range(T):
        if t > 0:
            b0 = b0 + spec.coef_innov_sd * rng.standard_normal(N)
            Bt = Bt + spec.coef_innov_sd * rng.standard_normal((p, N, N))
            lt = lt + spec.impact_innov_sd * rng.standard_normal(lt.size)
        if h_prev is None:
            ht = spec.hbar + stationary_sd * rng.standard_normal(N)
        else:
            ht = spec.hbar + spec.rho * (h_prev - spec.hbar) + np.sqrt(spec.sigma2) * rng.standard_normal(N)
        Lt = np.eye(N)
        Lt[lower] = lt
        mean = b0.copy()
        for s in range(1, p + 1):
            if t - s >= 0:
                mean += Bt[s - 1] @ y[t - s]
        y[t] = mean + Lt @ (np.exp(ht / 2.0) * rng.standard_normal(N))
        beta0[t], B[t], L[t], h[t] = b0, Bt, Lt, ht
        h_prev = ht
    return TVPVARData(y, p), TVPVARTruth(beta0, B, L, h)
