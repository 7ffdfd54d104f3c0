"""Gaussian approximations to the augmented posterior of ``(theta, latents)``.

These are the comparison methods for the hybrid approximation: a factor
Gaussian over ``theta`` times independent factor Gaussians over per-unit
latent blocks, calibrated with the ordinary reparameterization gradient.
Setting every factor count to zero gives the mean-field approximation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .families import D_FLOOR, GaussianFactorVA, vech_indices, vech_size
from .sga import FitConfig, LatentVariableModel, run_sga

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class AugmentedDraw:
    theta: np.ndarray
    head_eps: tuple
    unit_zeta1: np.ndarray
    unit_zeta2: np.ndarray


class AugmentedGaussianVA:
    """Block-diagonal factor Gaussian ``q(theta) prod_i q_i(z_i)``.

    The stacked vector is ``psi = (theta, z_1, ..., z_N)`` with ``theta`` of
    length ``head.m`` and every ``z_i`` of length ``unit_dim``.  ``lambda`` is
    laid out as the head block's lambda followed by the unit means, the unit
    loadings (each unit's ``vech`` in turn) and the unit scales.
    """

    family = "augmented"

    def __init__(self, head: GaussianFactorVA, unit_mu: np.ndarray, unit_B: np.ndarray, unit_d: np.ndarray):
        self.head = head
        self.unit_mu = np.asarray(unit_mu, dtype=float)
        self.unit_B = np.asarray(unit_B, dtype=float)
        self.unit_d = np.asarray(unit_d, dtype=float)
        n, r = self.unit_mu.shape
        if self.unit_B.shape[:2] != (n, r) or self.unit_d.shape != (n, r):
            raise ValueError("unit block shapes disagree")

    @classmethod
    def initial(cls, head_dim, head_k, n_units, unit_dim, unit_k, head_mu=None, unit_mu=None, d0=0.01):
        head = GaussianFactorVA.initial(head_dim, head_k, mu=head_mu, d0=d0)
        mu = np.zeros((n_units, unit_dim)) if unit_mu is None else np.asarray(unit_mu, dtype=float).reshape(n_units, unit_dim)
        return cls(head, mu, np.zeros((n_units, unit_dim, unit_k)), np.full((n_units, unit_dim), d0))

    @property
    def n_units(self) -> int:
        return self.unit_mu.shape[0]

    @property
    def unit_dim(self) -> int:
        return self.unit_mu.shape[1]

    @property
    def unit_k(self) -> int:
        return self.unit_B.shape[2]

    @property
    def m(self) -> int:
        return self.head.m + self.unit_mu.size

    @property
    def k(self) -> int:
        return self.head.k

    def to_lambda(self) -> np.ndarray:
        rows, cols = vech_indices(self.unit_dim, self.unit_k)
        return np.concatenate(
            [self.head.to_lambda(), self.unit_mu.ravel(), self.unit_B[:, rows, cols].ravel(), self.unit_d.ravel()]
        )

    def with_lambda(self, lam: np.ndarray):
        n, r, k = self.n_units, self.unit_dim, self.unit_k
        nh = self.head.n_params
        nv = vech_size(r, k)
        head = self.head.with_lambda(lam[:nh])
        pos = nh
        mu = lam[pos : pos + n * r].reshape(n, r)
        pos += n * r
        B = np.zeros((n, r, k))
        rows, cols = vech_indices(r, k)
        B[:, rows, cols] = lam[pos : pos + n * nv].reshape(n, nv)
        pos += n * nv
        d = np.maximum(np.abs(lam[pos : pos + n * r].reshape(n, r)), D_FLOOR)
        return type(self)(head, mu.copy(), B, d)

    # -- covariance helpers -------------------------------------------------
    def _unit_cov(self) -> np.ndarray:
        cov = self.unit_B @ self.unit_B.transpose(0, 2, 1)
        idx = np.arange(self.unit_dim)
        cov[:, idx, idx] += self.unit_d**2
        return cov

    def unit_sd(self) -> np.ndarray:
        return np.sqrt(np.sum(self.unit_B**2, axis=2) + self.unit_d**2)

    def marginal_sd(self) -> np.ndarray:
        return np.concatenate([self.head.marginal_sd(), self.unit_sd().ravel()])

    def mean(self) -> np.ndarray:
        return np.concatenate([self.head.mu, self.unit_mu.ravel()])

    def center(self) -> np.ndarray:
        return self.mean()

    def marginal_mean(self, rng=None, n_draws=None) -> np.ndarray:
        return self.mean()

    # -- VA interface -------------------------------------------------------
    def draw_epsilon(self, rng: np.random.Generator):
        head_eps = self.head.draw_epsilon(rng)
        z1 = rng.standard_normal((self.n_units, self.unit_k))
        z2 = rng.standard_normal((self.n_units, self.unit_dim))
        return head_eps, z1, z2

    def sample_reparam(self, epsilon) -> AugmentedDraw:
        head_eps, z1, z2 = epsilon
        head_draw = self.head.sample_reparam(head_eps)
        units = self.unit_mu + np.einsum("nrk,nk->nr", self.unit_B, z1) + self.unit_d * z2
        return AugmentedDraw(np.concatenate([head_draw.theta, units.ravel()]), head_eps, z1, z2)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        head = self.head.sample(rng, size)
        z1 = rng.standard_normal((size, self.n_units, self.unit_k))
        z2 = rng.standard_normal((size, self.n_units, self.unit_dim))
        units = self.unit_mu + np.einsum("nrk,snk->snr", self.unit_B, z1) + self.unit_d * z2
        return np.concatenate([head, units.reshape(size, -1)], axis=1)

    def score_theta(self, psi: np.ndarray) -> np.ndarray:
        mh = self.head.m
        g_head = self.head.score_theta(psi[:mh])
        if self.n_units == 0:
            return g_head
        dev = psi[mh:].reshape(self.n_units, self.unit_dim) - self.unit_mu
        if self.unit_k == 0:
            g_units = -dev / self.unit_d**2
        else:
            g_units = -np.linalg.solve(self._unit_cov(), dev[..., None])[..., 0]
        return np.concatenate([g_head, g_units.ravel()])

    def log_density(self, psi: np.ndarray):
        psi = np.atleast_2d(psi)
        mh = self.head.m
        lh = self.head.log_density(psi[:, :mh])
        if self.n_units == 0:
            return lh
        dev = psi[:, mh:].reshape(psi.shape[0], self.n_units, self.unit_dim) - self.unit_mu
        if self.unit_k == 0:
            logdet = 2.0 * np.sum(np.log(self.unit_d))
            quad = np.sum(dev**2 / self.unit_d**2, axis=(1, 2))
            return lh - 0.5 * (self.n_units * self.unit_dim * LOG_2PI + logdet + quad)
        cov = self._unit_cov()
        chol = np.linalg.cholesky(cov)
        logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=1, axis2=2)))
        sol = np.linalg.solve(cov[None], dev[..., None])[..., 0]
        quad = np.sum(dev * sol, axis=(1, 2))
        lu = -0.5 * (self.n_units * self.unit_dim * LOG_2PI + logdet + quad)
        return lh + lu

    def jacobian_action(self, draw: AugmentedDraw, g_psi: np.ndarray) -> np.ndarray:
        mh = self.head.m
        z1, z2 = draw.head_eps
        head_draw = self.head.sample_reparam((z1, z2))
        g_head = self.head.jacobian_action(head_draw, g_psi[:mh])
        g_units = g_psi[mh:].reshape(self.n_units, self.unit_dim)
        rows, cols = vech_indices(self.unit_dim, self.unit_k)
        g_B = g_units[:, rows] * draw.unit_zeta1[:, cols]
        return np.concatenate([g_head, g_units.ravel(), g_B.ravel(), (g_units * draw.unit_zeta2).ravel()])


class AugmentedModel(LatentVariableModel):
    """Wraps a gradient of ``log g`` over the stacked vector for the SGA engine.

    The latent sampler is a no-op: every latent variable is part of the
    variational vector.
    """

    def __init__(self, grad_fn: Callable[[np.ndarray], np.ndarray], dim: int, diagnostic_fn=None):
        self.grad_fn = grad_fn
        self.dim_theta = dim
        self.diagnostic_fn = diagnostic_fn

    def grad_log_g(self, theta, z):
        return self.grad_fn(theta)

    def sample_latent(self, theta, z, n_sweeps, rng):
        return None

    def init_latent(self, rng, theta=None):
        return None

    def diagnostic(self, theta, z):
        return None if self.diagnostic_fn is None else self.diagnostic_fn(theta)


def fit_augmented_benchmark(grad_fn, va: AugmentedGaussianVA, config: FitConfig, diagnostic_fn=None):
    """Standard reparameterization-gradient SGA over the augmented vector."""
    return run_sga(AugmentedModel(grad_fn, va.m, diagnostic_fn), va, config)


def block_optimal_moments(precision: np.ndarray, mean: np.ndarray, blocks) -> list[tuple[np.ndarray, np.ndarray]]:
    """Optimal block-independent Gaussian for a Gaussian target.

    For a target ``N(mean, precision^-1)`` and a product of unrestricted
    Gaussians over index ``blocks``, the KL-optimal factor for each block has
    the target mean and covariance equal to the inverse of that block of the
    precision matrix.
    """
    out = []
    for idx in blocks:
        idx = np.asarray(idx)
        out.append((mean[idx], np.linalg.inv(precision[np.ix_(idx, idx)])))
    return out
