"""Summaries of a fitted hybrid approximation ``q0(theta) p(z | theta, y)``."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .sga import LatentVariableModel


def hybrid_latent_moments(
    model: LatentVariableModel,
    va,
    z_init,
    n_draws: int,
    n_sweeps: int,
    rng: np.random.Generator,
    extract: Callable = lambda z: z,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo mean and standard deviation of ``extract(z)`` under the hybrid approximation.

    Each draw takes ``theta ~ q0`` and advances the latent state by
    ``n_sweeps`` of the model's conditional sampler from the previous state,
    mirroring how the latents are refreshed during calibration.
    """
    z = z_init
    total = None
    for _ in range(n_draws):
        theta = va.sample_reparam(va.draw_epsilon(rng)).theta
        z = model.sample_latent(theta, z, n_sweeps, rng)
        value = np.asarray(extract(z), dtype=float)
        if total is None:
            total, total_sq = np.zeros_like(value), np.zeros_like(value)
        total += value
        total_sq += value**2
    mean = total / n_draws
    return mean, np.sqrt(np.maximum(total_sq / n_draws - mean**2, 0.0))


def hybrid_conditional_moments(
    model: LatentVariableModel,
    va,
    z_init,
    n_draws: int,
    n_sweeps: int,
    rng: np.random.Generator,
    moments: Callable,
) -> tuple[np.ndarray, np.ndarray]:
    """Rao-Blackwellised mean and SD of a latent block under the hybrid approximation.

    ``moments(theta, z)`` returns the mean and variance of the block given
    ``theta`` and the remaining latents in ``z``.  Averaging these
    conditional moments along the same chain as :func:`hybrid_latent_moments`
    targets the same quantities with lower Monte Carlo error.
    """
    z = z_init
    total = total_sq = total_var = None
    for _ in range(n_draws):
        theta = va.sample_reparam(va.draw_epsilon(rng)).theta
        z = model.sample_latent(theta, z, n_sweeps, rng)
        mean, var = moments(theta, z)
        if total is None:
            total, total_sq, total_var = np.zeros_like(mean), np.zeros_like(mean), np.zeros_like(mean)
        total += mean
        total_sq += mean**2
        total_var += var
    mean = total / n_draws
    spread = np.maximum(total_sq / n_draws - mean**2, 0.0)
    return mean, np.sqrt(total_var / n_draws + spread)
