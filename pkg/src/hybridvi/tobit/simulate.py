"""Synthetic tobit panels with known generating values."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import TobitData, TobitParams, _linear_predictor, assemble_v_alpha


@dataclass(frozen=True)
class TobitTruth:
    params: TobitParams
    alpha: np.ndarray
    ystar: np.ndarray


def default_true_params(p: int, r: int, k_alpha: int) -> TobitParams:
    """Moderate signal, roughly half the cells censored with the default covariates."""
    beta = np.resize(np.array([-0.3, 0.8, -0.6, 0.5]), p)
    L = np.zeros((r, k_alpha))
    for j in range(k_alpha):
        L[j, j] = 0.6
        L[j + 1 :, j] = 0.3
    return TobitParams.from_natural(beta, 1.0, np.full(r, 0.3), L)


def simulate_covariates(N: int, T: int, p: int, rng: np.random.Generator, n_binary: int | None = None) -> np.ndarray:
    """Intercept column, standard-normal columns, then ``n_binary`` Bernoulli(0.3) columns."""
    if p < 1:
        raise ValueError("need at least the intercept column")
    n_binary = (p - 1) // 3 if n_binary is None else n_binary
    n_cont = p - 1 - n_binary
    if n_cont < 0:
        raise ValueError("too many binary columns")
    X = np.empty((N, T, p))
    X[..., 0] = 1.0
    X[..., 1 : 1 + n_cont] = rng.standard_normal((N, T, n_cont))
    X[..., 1 + n_cont :] = (rng.random((N, T, n_binary)) < 0.3).astype(float)
    return X


def simulate_tobit(
    N: int,
    T: int,
    p: int,
    r: int,
    k_alpha: int,
    true_params: TobitParams | None,
    rng: np.random.Generator,
    w_cols=None,
    n_binary: int | None = None,
) -> tuple[TobitData, TobitTruth]:
    """Draw ``alpha_i ~ N(0, V)``, errors and covariates, then censor at zero.

    ``w_cols`` defaults to the first ``r`` covariate columns.
    """
    params = default_true_params(p, r, k_alpha) if true_params is None else true_params
    w_cols = tuple(range(r)) if w_cols is None else tuple(w_cols)
    X = simulate_covariates(N, T, p, rng, n_binary)
    V = assemble_v_alpha(params).dense()
    alpha = rng.standard_normal((N, r)) @ np.linalg.cholesky(V).T
    eta = _linear_predictor(X, X[:, :, list(w_cols)], params.beta, alpha)
    ystar = eta + params.sigma * rng.standard_normal((N, T))
    y = np.maximum(ystar, 0.0)
    return TobitData(X, y, w_cols), TobitTruth(params, alpha, ystar)
