"""Parametric marginal approximations for the global parameters.

Two families are provided, both built on a factor covariance:

* ``GaussianFactorVA``: ``theta ~ N(mu, B B^T + D^2)``.
* ``GaussianCopulaVA``: ``vartheta ~ N(mu, B B^T + D^2)`` and
  ``theta_i = t_{gamma_i}^{-1}(vartheta_i)`` with the Yeo-Johnson transform.

Each family exposes reparameterized sampling, log-density, the score
``grad_theta log q(theta)`` and the Jacobian action ``(d theta / d lambda)^T g``
used by the reparameterization gradient.  The variational parameter vector
is laid out as ``(mu, vech(B), d)`` plus ``gamma_tilde`` for the copula, where
``vech`` stacks the lower-trapezoidal entries of ``B`` column by column and
``gamma = 2 * logistic(gamma_tilde)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.special import expit, logit, ndtri

from .factor import FactorCovariance, woodbury_logdet, woodbury_solve

LAYOUT_VERSION = 1
D_FLOOR = 1e-8
LOG_2PI = np.log(2.0 * np.pi)


# ---------------------------------------------------------------------------
# vech layout


@lru_cache(maxsize=None)
def vech_indices(m: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column indices of the free entries of an ``m x k`` loading matrix.

    Column-major order: column 0 rows ``0..m-1``, column 1 rows ``1..m-1``, ...
    """
    rows = np.concatenate([np.arange(j, m) for j in range(k)]).astype(int) if k else np.zeros(0, int)
    cols = np.concatenate([np.full(m - j, j) for j in range(k)]).astype(int) if k else np.zeros(0, int)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


def vech_size(m: int, k: int) -> int:
    return m * k - k * (k - 1) // 2


def vech(B: np.ndarray) -> np.ndarray:
    rows, cols = vech_indices(*B.shape)
    return B[rows, cols]


def unvech(values: np.ndarray, m: int, k: int) -> np.ndarray:
    B = np.zeros((m, k))
    rows, cols = vech_indices(m, k)
    B[rows, cols] = values
    return B


# ---------------------------------------------------------------------------
# Yeo-Johnson transform


def _check_gamma(gamma):
    gamma = np.asarray(gamma, dtype=float)
    if np.any(~(gamma >= 0.0)) or np.any(~(gamma <= 2.0)):
        raise ValueError("Yeo-Johnson gamma must lie in [0, 2]")
    return gamma


def _branch_power(x, gamma):
    # exponent gamma on the non-negative branch, 2 - gamma on the negative one
    return np.where(x < 0, 2.0 - gamma, gamma)


def _expm1_ratio(p, a):
    """``expm1(p * a) / p`` with its limit ``a`` at ``p = 0``."""
    safe = np.where(p == 0.0, 1.0, p)
    return np.where(p == 0.0, a, np.expm1(p * a) / safe)


def yeo_johnson(theta, gamma):
    """Yeo-Johnson transform ``t_gamma(theta)``.

    ``((1 + theta)^gamma - 1) / gamma`` for ``theta >= 0`` and
    ``-((1 - theta)^(2 - gamma) - 1) / (2 - gamma)`` for ``theta < 0``; the
    boundary values ``gamma = 0`` and ``gamma = 2`` use the logarithmic limits.
    """
    gamma = _check_gamma(gamma)
    theta = np.asarray(theta, dtype=float)
    p = _branch_power(theta, gamma)
    out = np.sign(theta) * _expm1_ratio(p, np.log1p(np.abs(theta)))
    # exact identity at gamma = 1 so the copula reduces to the Gaussian bit for bit
    return np.where(gamma == 1.0, theta, out)


def yeo_johnson_inv(vartheta, gamma):
    """Inverse transform; the sign of ``vartheta`` selects the branch."""
    gamma = _check_gamma(gamma)
    vartheta = np.asarray(vartheta, dtype=float)
    p = _branch_power(vartheta, gamma)
    safe = np.where(p == 0.0, 1.0, p)
    log_a = np.where(p == 0.0, np.abs(vartheta), np.log1p(p * np.abs(vartheta)) / safe)
    return np.where(gamma == 1.0, vartheta, np.sign(vartheta) * np.expm1(log_a))


def yj_dtheta(theta, gamma):
    """Derivative of the transform in ``theta``; always positive."""
    gamma = _check_gamma(gamma)
    return np.exp(yj_log_dtheta(theta, gamma))


def yj_log_dtheta(theta, gamma):
    theta = np.asarray(theta, dtype=float)
    return (_branch_power(theta, gamma) - 1.0) * np.log1p(np.abs(theta))


def yj_dgamma(theta, gamma):
    """Derivative of the transform in ``gamma`` at fixed ``theta``.

    Both branches share the form ``(p a^p ln a - a^p + 1) / p^2`` with
    ``a = 1 + |theta|`` and ``p`` the branch exponent (limit ``ln(a)^2 / 2`` at
    ``p = 0``).
    """
    gamma = _check_gamma(gamma)
    theta = np.asarray(theta, dtype=float)
    p = _branch_power(theta, gamma)
    log_a = np.log1p(np.abs(theta))
    a_p = np.exp(p * log_a)
    safe = np.where(p == 0.0, 1.0, p)
    return np.where(p == 0.0, 0.5 * log_a**2, (p * a_p * log_a - a_p + 1.0) / safe**2)


# ---------------------------------------------------------------------------
# draws


@dataclass(frozen=True)
class ReparamDraw:
    """One reparameterized draw and the noise that produced it."""

    theta: np.ndarray
    zeta1: np.ndarray
    zeta2: np.ndarray
    vartheta: np.ndarray | None = None


class StaleDrawError(ValueError):
    """The draw's noise dimensions do not match the variational family."""


def _lowrank_action(cov: FactorCovariance, zeta1, zeta2, g):
    """Jacobian action of ``mu + B zeta1 + d * zeta2`` contracted with ``g``."""
    rows, cols = vech_indices(cov.m, cov.k)
    return np.concatenate([g, g[rows] * zeta1[cols], g * zeta2])


class _FactorFamily:
    family = ""

    def __init__(self, mu: np.ndarray, cov: FactorCovariance):
        mu = np.asarray(mu, dtype=float)
        if mu.shape != (cov.m,):
            raise ValueError("mu and covariance dimensions disagree")
        self.mu = mu
        self.cov = cov

    @property
    def m(self) -> int:
        return self.cov.m

    @property
    def k(self) -> int:
        return self.cov.k

    @property
    def n_params(self) -> int:
        return 2 * self.m + vech_size(self.m, self.k)

    def draw_epsilon(self, rng: np.random.Generator):
        return rng.standard_normal(self.k), rng.standard_normal(self.m)

    def center(self) -> np.ndarray:
        """The draw at zero noise (mean for the Gaussian, median for the copula)."""
        return self.sample_reparam((np.zeros(self.k), np.zeros(self.m))).theta

    def _check_draw(self, draw: ReparamDraw):
        if draw.zeta1.shape != (self.k,) or draw.zeta2.shape != (self.m,):
            raise StaleDrawError("draw was produced by a family with different (m, k)")


class GaussianFactorVA(_FactorFamily):
    """Gaussian approximation with factor covariance."""

    family = "gaussian"

    @classmethod
    def initial(cls, m: int, k: int, mu=None, d0: float = 0.01):
        mu = np.zeros(m) if mu is None else np.asarray(mu, dtype=float)
        return cls(mu, FactorCovariance(np.zeros((m, k)), np.full(m, d0)))

    @classmethod
    def from_lambda(cls, lam: np.ndarray, m: int, k: int):
        lam = np.asarray(lam, dtype=float)
        nv = vech_size(m, k)
        if lam.shape != (2 * m + nv,):
            raise ValueError(f"lambda has length {lam.shape}, expected {2 * m + nv}")
        d = np.maximum(np.abs(lam[m + nv :]), D_FLOOR)
        return cls(lam[:m].copy(), FactorCovariance(unvech(lam[m : m + nv], m, k), d))

    def to_lambda(self) -> np.ndarray:
        return np.concatenate([self.mu, vech(self.cov.B), self.cov.d])

    def with_lambda(self, lam: np.ndarray):
        return type(self).from_lambda(lam, self.m, self.k)

    def sample_reparam(self, epsilon0) -> ReparamDraw:
        zeta1, zeta2 = (np.asarray(e, dtype=float) for e in epsilon0)
        if zeta1.shape != (self.k,) or zeta2.shape != (self.m,):
            raise ValueError("epsilon0 dimensions do not match (k, m)")
        theta = self.mu + self.cov.B @ zeta1 + self.cov.d * zeta2
        return ReparamDraw(theta, zeta1, zeta2)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        z1 = rng.standard_normal((size, self.k))
        z2 = rng.standard_normal((size, self.m))
        return self.mu + z1 @ self.cov.B.T + z2 * self.cov.d

    def log_density(self, theta: np.ndarray):
        """Log density at ``theta`` of shape ``(m,)`` or ``(n, m)``."""
        theta = np.asarray(theta, dtype=float)
        dev = (theta - self.mu).T
        quad = np.sum(dev * woodbury_solve(self.cov, dev), axis=0)
        return -0.5 * (self.m * LOG_2PI + woodbury_logdet(self.cov) + quad)

    def score_theta(self, theta: np.ndarray) -> np.ndarray:
        return -woodbury_solve(self.cov, np.asarray(theta) - self.mu)

    def jacobian_action(self, draw: ReparamDraw, g_theta: np.ndarray) -> np.ndarray:
        self._check_draw(draw)
        return _lowrank_action(self.cov, draw.zeta1, draw.zeta2, np.asarray(g_theta, dtype=float))

    def marginal_sd(self) -> np.ndarray:
        return np.sqrt(np.sum(self.cov.B**2, axis=1) + self.cov.d**2)

    def marginal_quantiles(self, probs) -> np.ndarray:
        """Exact marginal quantiles, shape ``(len(probs), m)``."""
        z = ndtri(np.asarray(probs, dtype=float))
        return self.mu + z[:, None] * self.marginal_sd()

    def marginal_mean(self, rng=None, n_draws=None) -> np.ndarray:
        return self.mu.copy()


class GaussianCopulaVA(_FactorFamily):
    """Gaussian factor copula with Yeo-Johnson margins."""

    family = "copula"

    def __init__(self, mu: np.ndarray, cov: FactorCovariance, gamma: np.ndarray, gamma_tilde=None):
        super().__init__(mu, cov)
        gamma = np.asarray(gamma, dtype=float)
        if np.any(~(gamma > 0.0)) or np.any(~(gamma < 2.0)):
            raise ValueError("copula gamma must lie in the open interval (0, 2)")
        if gamma.shape != (cov.m,):
            raise ValueError("gamma must have one entry per dimension")
        self.gamma = gamma
        # the unconstrained parameter is kept verbatim so lambda round-trips exactly
        self.gamma_tilde = logit(gamma / 2.0) if gamma_tilde is None else np.asarray(gamma_tilde, dtype=float)

    @property
    def n_params(self) -> int:
        return super().n_params + self.m

    @classmethod
    def initial(cls, m: int, k: int, mu=None, d0: float = 0.01):
        """Start at the identity transform, so the copula equals a Gaussian."""
        mu = np.zeros(m) if mu is None else np.asarray(mu, dtype=float)
        return cls(yeo_johnson(mu, np.ones(m)), FactorCovariance(np.zeros((m, k)), np.full(m, d0)), np.ones(m))

    @classmethod
    def from_lambda(cls, lam: np.ndarray, m: int, k: int):
        lam = np.asarray(lam, dtype=float)
        nv = vech_size(m, k)
        if lam.shape != (3 * m + nv,):
            raise ValueError(f"lambda has length {lam.shape}, expected {3 * m + nv}")
        d = np.maximum(np.abs(lam[m + nv : 2 * m + nv]), D_FLOOR)
        gamma_tilde = lam[2 * m + nv :].copy()
        # keep gamma strictly inside (0, 2) even when the logistic saturates
        gamma = np.clip(2.0 * expit(gamma_tilde), 1e-12, 2.0 - 1e-12)
        return cls(lam[:m].copy(), FactorCovariance(unvech(lam[m : m + nv], m, k), d), gamma, gamma_tilde)

    def to_lambda(self) -> np.ndarray:
        return np.concatenate([self.mu, vech(self.cov.B), self.cov.d, self.gamma_tilde])

    def with_lambda(self, lam: np.ndarray):
        return type(self).from_lambda(lam, self.m, self.k)

    def sample_reparam(self, epsilon0) -> ReparamDraw:
        zeta1, zeta2 = (np.asarray(e, dtype=float) for e in epsilon0)
        if zeta1.shape != (self.k,) or zeta2.shape != (self.m,):
            raise ValueError("epsilon0 dimensions do not match (k, m)")
        vartheta = self.mu + self.cov.B @ zeta1 + self.cov.d * zeta2
        return ReparamDraw(yeo_johnson_inv(vartheta, self.gamma), zeta1, zeta2, vartheta)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        z1 = rng.standard_normal((size, self.k))
        z2 = rng.standard_normal((size, self.m))
        return yeo_johnson_inv(self.mu + z1 @ self.cov.B.T + z2 * self.cov.d, self.gamma)

    def log_density(self, theta: np.ndarray):
        theta = np.asarray(theta, dtype=float)
        vt = yeo_johnson(theta, self.gamma)
        dev = (vt - self.mu).T
        quad = np.sum(dev * woodbury_solve(self.cov, dev), axis=0)
        log_jac = np.sum(yj_log_dtheta(theta, self.gamma), axis=-1)
        return -0.5 * (self.m * LOG_2PI + woodbury_logdet(self.cov) + quad) + log_jac

    def score_theta(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        vt = yeo_johnson(theta, self.gamma)
        gauss = woodbury_solve(self.cov, vt - self.mu)
        return -yj_dtheta(theta, self.gamma) * gauss + (self.gamma - 1.0) / (np.abs(theta) + 1.0)

    def jacobian_action(self, draw: ReparamDraw, g_theta: np.ndarray) -> np.ndarray:
        self._check_draw(draw)
        g = np.asarray(g_theta, dtype=float)
        theta = draw.theta
        # d theta / d vartheta = 1 / t'(theta)
        g_vt = g / yj_dtheta(theta, self.gamma)
        dgamma_dtilde = self.gamma * (1.0 - self.gamma / 2.0)
        g_gamma = -g_vt * yj_dgamma(theta, self.gamma) * dgamma_dtilde
        return np.concatenate([_lowrank_action(self.cov, draw.zeta1, draw.zeta2, g_vt), g_gamma])

    def marginal_quantiles(self, probs) -> np.ndarray:
        """Exact marginal quantiles (the transform is monotone)."""
        z = ndtri(np.asarray(probs, dtype=float))
        sd = np.sqrt(np.sum(self.cov.B**2, axis=1) + self.cov.d**2)
        return yeo_johnson_inv(self.mu + z[:, None] * sd, self.gamma)

    def marginal_mean(self, rng: np.random.Generator, n_draws: int = 20000) -> np.ndarray:
        return self.sample(rng, n_draws).mean(axis=0)


FAMILIES = {"gaussian": GaussianFactorVA, "copula": GaussianCopulaVA}


def save_lambda(path, va) -> None:
    """Write ``<path>.npy`` with the flat lambda and ``<path>.json`` with its layout."""
    path = Path(path)
    np.save(path.with_suffix(".npy"), va.to_lambda())
    meta = {"family": va.family, "m": va.m, "k": va.k, "layout_version": LAYOUT_VERSION}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")


def load_lambda(path):
    """Inverse of :func:`save_lambda`."""
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    if meta.get("layout_version") != LAYOUT_VERSION:
        raise ValueError(f"unsupported lambda layout version {meta.get('layout_version')}")
    lam = np.load(path.with_suffix(".npy"))
    return FAMILIES[meta["family"]].from_lambda(lam, meta["m"], meta["k"])
