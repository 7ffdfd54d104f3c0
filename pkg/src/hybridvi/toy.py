"""Conjugate Gaussian latent-variable model with closed-form posteriors.

    theta ~ N(0, s0^2 I_m)
    z_i | theta ~ N(a_i^T theta, tau^2)
    y_i | z_i ~ N(z_i, sigma^2)              i = 1..n

Everything needed to check the variational machinery exactly is available
in closed form: the conditional ``p(z | theta, y)``, the marginal posterior of
``theta``, the evidence, and the hybrid objective and its gradient for a
Gaussian ``q0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .factor import woodbury_logdet, woodbury_solve
from .families import GaussianFactorVA, vech_indices
from .sga import LatentVariableModel

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class ConjugateToy(LatentVariableModel):
    A: np.ndarray
    y: np.ndarray
    prior_var: float = 4.0
    latent_var: float = 0.5
    noise_var: float = 0.25

    @classmethod
    def simulate(cls, n: int, m: int, rng: np.random.Generator, **variances):
        return cls.simulate_with_truth(n, m, rng, **variances)[0]

    @classmethod
    def simulate_with_truth(cls, n: int, m: int, rng: np.random.Generator, **variances):
        """As :meth:`simulate`, also returning the generating ``theta`` and ``z``."""
        A = rng.standard_normal((n, m))
        model = cls(A, np.zeros(n), **variances)
        theta = rng.standard_normal(m) * np.sqrt(model.prior_var)
        z = A @ theta + rng.standard_normal(n) * np.sqrt(model.latent_var)
        y = z + rng.standard_normal(n) * np.sqrt(model.noise_var)
        return cls(A, y, **variances), theta, z

    @property
    def dim_theta(self) -> int:
        return self.A.shape[1]

    @property
    def unit_count(self) -> int:
        return self.A.shape[0]

    # -- exact quantities -------------------------------------------------
    def posterior_precision(self) -> np.ndarray:
        s2 = self.latent_var + self.noise_var
        return np.eye(self.dim_theta) / self.prior_var + self.A.T @ self.A / s2

    def posterior_mean(self) -> np.ndarray:
        s2 = self.latent_var + self.noise_var
        return np.linalg.solve(self.posterior_precision(), self.A.T @ self.y / s2)

    def posterior_cov(self) -> np.ndarray:
        return np.linalg.inv(self.posterior_precision())

    def log_evidence(self) -> float:
        n = self.unit_count
        cov = self.prior_var * self.A @ self.A.T + (self.latent_var + self.noise_var) * np.eye(n)
        _, logdet = np.linalg.slogdet(cov)
        return float(-0.5 * (n * LOG_2PI + logdet + self.y @ np.linalg.solve(cov, self.y)))

    def log_marginal_joint(self, theta: np.ndarray):
        """``log p(y | theta) + log p(theta)`` for ``theta`` of shape ``(m,)`` or ``(n, m)``."""
        single = np.ndim(theta) == 1
        theta = np.atleast_2d(theta)
        s2 = self.latent_var + self.noise_var
        resid = self.y - theta @ self.A.T
        m, n = self.dim_theta, self.unit_count
        lik = -0.5 * (n * np.log(2 * np.pi * s2) + np.sum(resid**2, axis=1) / s2)
        prior = -0.5 * (m * np.log(2 * np.pi * self.prior_var) + np.sum(theta**2, axis=1) / self.prior_var)
        out = lik + prior
        return out[0] if single else out

    def hybrid_objective(self, va: GaussianFactorVA) -> float:
        """Exact hybrid ELBO ``E_q0[log p(y|theta) p(theta) - log q0(theta)]``."""
        P, mean = self.posterior_precision(), self.posterior_mean()
        dev = va.mu - mean
        Sigma = va.cov.dense()
        _, logdet_P = np.linalg.slogdet(P)
        kl = 0.5 * (np.trace(P @ Sigma) + dev @ P @ dev - self.dim_theta - woodbury_logdet(va.cov) - logdet_P)
        return self.log_evidence() - kl

    def hybrid_objective_grad(self, va: GaussianFactorVA) -> np.ndarray:
        """Exact gradient of :meth:`hybrid_objective` in the lambda layout."""
        P, mean = self.posterior_precision(), self.posterior_mean()
        diff = woodbury_solve(va.cov, np.eye(va.m)) - P
        g_mu = -P @ (va.mu - mean)
        rows, cols = vech_indices(va.m, va.k)
        g_B = (diff @ va.cov.B)[rows, cols]
        g_d = np.diag(diff) * va.cov.d
        return np.concatenate([g_mu, g_B, g_d])

    def conditional_moments(self, theta: np.ndarray) -> tuple[np.ndarray, float]:
        """Mean and variance of ``z_i | theta, y_i``."""
        t2, s2 = self.latent_var, self.noise_var
        mean = (s2 * (self.A @ theta) + t2 * self.y) / (t2 + s2)
        return mean, t2 * s2 / (t2 + s2)

    # -- hybrid model interface ---------------------------------------------
    def grad_log_g(self, theta, z) -> np.ndarray:
        return self.A.T @ (z - self.A @ theta) / self.latent_var - theta / self.prior_var

    def grad_log_g_units(self, theta, z, units) -> np.ndarray:
        units = np.asarray(units, dtype=int)
        scale = self.unit_count / units.size
        A = self.A[units]
        return scale * A.T @ (z[units] - A @ theta) / self.latent_var - theta / self.prior_var

    def sample_latent(self, theta, z, n_sweeps, rng):
        mean, var = self.conditional_moments(theta)
        return mean + np.sqrt(var) * rng.standard_normal(self.unit_count)

    def sample_latent_units(self, theta, z, units, n_sweeps, rng):
        mean, var = self.conditional_moments(theta)
        z = z.copy()
        z[units] = mean[units] + np.sqrt(var) * rng.standard_normal(len(units))
        return z

    def init_latent(self, rng, theta=None):
        return self.y.astype(float).copy()

    # -- augmented posterior over (theta, z) ------------------------------
    def joint_precision(self) -> np.ndarray:
        """Precision of the Gaussian posterior of ``(theta, z)``."""
        m, n = self.dim_theta, self.unit_count
        t2, s2 = self.latent_var, self.noise_var
        prec = np.zeros((m + n, m + n))
        prec[:m, :m] = np.eye(m) / self.prior_var + self.A.T @ self.A / t2
        prec[:m, m:] = -self.A.T / t2
        prec[m:, :m] = -self.A / t2
        prec[m:, m:] = np.eye(n) * (1.0 / t2 + 1.0 / s2)
        return prec

    def joint_mean(self) -> np.ndarray:
        theta = self.posterior_mean()
        return np.concatenate([theta, self.conditional_moments(theta)[0]])

    def log_g_augmented(self, psi: np.ndarray):
        """``log p(y, z, theta)`` for stacked ``psi = (theta, z)``; batched over rows."""
        psi = np.atleast_2d(psi)
        m = self.dim_theta
        theta, z = psi[:, :m], psi[:, m:]
        t2, s2, v0 = self.latent_var, self.noise_var, self.prior_var
        n = self.unit_count
        lp = -0.5 * (m * np.log(2 * np.pi * v0) + np.sum(theta**2, axis=1) / v0)
        lz = -0.5 * (n * np.log(2 * np.pi * t2) + np.sum((z - theta @ self.A.T) ** 2, axis=1) / t2)
        ly = -0.5 * (n * np.log(2 * np.pi * s2) + np.sum((self.y - z) ** 2, axis=1) / s2)
        return lp + lz + ly

    def grad_log_g_augmented(self, psi: np.ndarray) -> np.ndarray:
        m = self.dim_theta
        theta, z = psi[:m], psi[m:]
        resid = z - self.A @ theta
        g_theta = self.A.T @ resid / self.latent_var - theta / self.prior_var
        g_z = -resid / self.latent_var + (self.y - z) / self.noise_var
        return np.concatenate([g_theta, g_z])
