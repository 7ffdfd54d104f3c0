"""Point-prediction accuracy and random-effect heterogeneity measures."""

from __future__ import annotations

import numpy as np
import pandas as pd
from scipy.stats import norm

from .model import TobitData, TobitParams, _linear_predictor


def censored_mean(eta, sigma) -> np.ndarray:
    """``E[max(y*, 0)]`` for ``y* ~ N(eta, sigma^2)``."""
    eta = np.asarray(eta, dtype=float)
    ratio = eta / sigma
    return eta * norm.cdf(ratio) + sigma * norm.pdf(ratio)


def rmse_metric(data: TobitData, alpha: np.ndarray, params: TobitParams) -> float:
    """Root mean squared error of ``y`` against its conditional mean given ``(alpha, theta)``."""
    eta = _linear_predictor(data.X, data.W, params.beta, alpha)
    return float(np.sqrt(np.mean((data.y - censored_mean(eta, params.sigma)) ** 2)))


def heterogeneity_draws(data: TobitData, v_alpha_draws: np.ndarray, focal, cross) -> np.ndarray:
    """``(n_draws, 3)`` array of (total, focal-block, cross-block) heterogeneity.

    ``focal`` and ``cross`` index positions within the random-effect vector.
    Each measure is ``1/(N r) sum_{i,t} w^T V w`` over the relevant block,
    evaluated as ``tr(V_block sum_{i,t} w w^T)``.
    """
    V = np.asarray(v_alpha_draws, dtype=float)
    if V.ndim == 2:
        V = V[None]
    scatter = data.wtw.sum(axis=0)
    scale = 1.0 / (data.N * data.r)
    out = np.empty((V.shape[0], 3))
    for j, block in enumerate([np.arange(data.r), np.asarray(focal, dtype=int), np.asarray(cross, dtype=int)]):
        sub = np.ix_(block, block)
        out[:, j] = scale * np.einsum("sjk,jk->s", V[(slice(None),) + sub], scatter[sub])
    return out


def heterogeneity(data: TobitData, v_alpha_draws: np.ndarray, focal, cross) -> pd.DataFrame:
    """Mean and central 95% interval of each heterogeneity measure over draws of ``V``."""
    values = heterogeneity_draws(data, v_alpha_draws, focal, cross)
    lo, hi = np.quantile(values, [0.025, 0.975], axis=0)
    return pd.DataFrame(
        {"measure": ["TH", "FBH", "CBH"], "mean": values.mean(axis=0), "lower": lo, "upper": hi}
    )
