"""Data, per-equation regressors and parameter layout for the TVP-VAR with stochastic volatility.

After pre-multiplying the VAR by the inverse of its unit lower-triangular
impact matrix, equation ``i`` (0-based) is the regression

    y_{i,t} = xtilde_t^T eta0 + xtilde_t^T diag(sqrt_v) etatilde_t + exp(h_t / 2) eps_t

with ``xtilde_t = (y_{t-1}, ..., y_{t-p}, 1, -y_{0:i,t})`` of length
``q = pN + i + 1``, random-walk states ``etatilde_t`` started at
``N(0, I)`` and an AR(1) log-volatility ``h_t``.  The coefficient vector
``alpha = (eta0, sqrt_v)`` has length ``J = 2q`` and is written
non-centered as ``alpha = sqrt(xi) * tau * sqrt(chi)``.  The unconstrained
parameter vector is

    theta = (tau [J], log chi [J], log xi, log nu [J], log kappa, hbar, rho_probit, log sigma2)

with ``rho = 2 Phi(rho_probit) - 1``, ``3J + 5`` entries in all.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri


@dataclass(frozen=True, eq=False)
class TVPVARData:
    """``y`` is ``(T, N)``; the first ``p`` rows serve as initial lags."""

    y: np.ndarray
    p: int = 1

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        object.__setattr__(self, "y", y)
        if y.ndim != 2:
            raise ValueError(f"y must be (T, N); got shape {y.shape}")
        if self.p < 1:
            raise ValueError("lag order p must be at least 1")
        if y.shape[0] <= self.p:
            raise ValueError(f"need more than p={self.p} time points; got {y.shape[0]}")
        if not np.all(np.isfinite(y)):
            raise ValueError("y must be finite (no missing values)")

    @property
    def T(self) -> int:
        return self.y.shape[0]

    @property
    def N(self) -> int:
        return self.y.shape[1]


@dataclass(frozen=True, eq=False)
class EquationDesign:
    """Response and base regressors of one equation for ``t = p, ..., T - 1`` (0-based)."""

    i: int
    xtilde: np.ndarray
    y: np.ndarray

    @property
    def T(self) -> int:
        return self.xtilde.shape[0]

    @property
    def q(self) -> int:
        return self.xtilde.shape[1]

    @property
    def J(self) -> int:
        return 2 * self.q

    @property
    def dim_theta(self) -> int:
        return 3 * self.J + 5

    def regressors(self, eta_tilde: np.ndarray) -> np.ndarray:
        """Full regressors ``x_t = (xtilde_t, xtilde_t * etatilde_t)`` as a ``(T, J)`` array."""
        return np.concatenate([self.xtilde, self.xtilde * eta_tilde], axis=-1)


def build_design(data: TVPVARData, i: int) -> EquationDesign:
    if not 0 <= i < data.N:
        raise ValueError(f"equation index {i} outside [0, {data.N})")
    y, p = data.y, data.p
    T = data.T
    lags = [y[p - s : T - s] for s in range(1, p + 1)]
    cols = lags + [np.ones((T - p, 1)), -y[p:, :i]]
    return EquationDesign(i, np.concatenate(cols, axis=1), y[p:, i].copy())


def residuals(design: EquationDesign, params: "TVPVARParams", eta_tilde: np.ndarray) -> np.ndarray:
    alpha = params.alpha
    q = design.q
    return design.y - design.xtilde @ alpha[:q] - (design.xtilde * eta_tilde) @ alpha[q:]


def theta_names(q: int) -> list[str]:
    J = 2 * q
    idx = range(J)
    return (
        [f"tau[{j}]" for j in idx]
        + [f"log_chi[{j}]" for j in idx]
        + ["log_xi"]
        + [f"log_nu[{j}]" for j in idx]
        + ["log_kappa", "hbar", "rho_probit", "log_sigma2"]
    )


@dataclass(frozen=True)
class TVPVARParams:
    tau: np.ndarray
    chi_log: np.ndarray
    xi_log: float
    nu_log: np.ndarray
    kappa_log: float
    hbar: float
    rho_probit: float
    sigma2_log: float

    @classmethod
    def from_vector(cls, theta: np.ndarray, J: int) -> "TVPVARParams":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (3 * J + 5,):
            raise ValueError(f"theta must have length {3 * J + 5}; got shape {theta.shape}")
        return cls(
            theta[:J].copy(),
            theta[J : 2 * J].copy(),
            float(theta[2 * J]),
            theta[2 * J + 1 : 3 * J + 1].copy(),
            *(float(v) for v in theta[3 * J + 1 :]),
        )

    @classmethod
    def from_natural(cls, alpha, chi, xi, nu, kappa, hbar, rho, sigma2) -> "TVPVARParams":
        """Build from ``alpha`` and the horseshoe scales; ``tau`` is solved from ``alpha``."""
        alpha, chi, nu = (np.asarray(v, dtype=float) for v in (alpha, chi, nu))
        return cls(
            alpha / np.sqrt(xi * chi),
            np.log(chi),
            float(np.log(xi)),
            np.log(nu),
            float(np.log(kappa)),
            float(hbar),
            float(ndtri((rho + 1.0) / 2.0)),
            float(np.log(sigma2)),
        )

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [
                self.tau,
                self.chi_log,
                [self.xi_log],
                self.nu_log,
                [self.kappa_log, self.hbar, self.rho_probit, self.sigma2_log],
            ]
        )

    @property
    def J(self) -> int:
        return self.tau.size

    @property
    def q(self) -> int:
        return self.tau.size // 2

    @property
    def chi(self) -> np.ndarray:
        return np.exp(self.chi_log)

    @property
    def xi(self) -> float:
        return float(np.exp(self.xi_log))

    @property
    def nu(self) -> np.ndarray:
        return np.exp(self.nu_log)

    @property
    def kappa(self) -> float:
        return float(np.exp(self.kappa_log))

    @property
    def rho(self) -> float:
        return float(2.0 * ndtr(self.rho_probit) - 1.0)

    @property
    def one_minus_rho_sq(self) -> float:
        """``1 - rho^2`` computed without cancellation near ``|rho| = 1``."""
        return float(4.0 * ndtr(self.rho_probit) * ndtr(-self.rho_probit))

    @property
    def sigma2(self) -> float:
        return float(np.exp(self.sigma2_log))

    @property
    def alpha(self) -> np.ndarray:
        return np.sqrt(self.xi) * self.tau * np.exp(0.5 * self.chi_log)

    @property
    def eta0(self) -> np.ndarray:
        return self.alpha[: self.q]

    @property
    def sqrt_v(self) -> np.ndarray:
        return self.alpha[self.q :]


@dataclass
class TVPVARLatent:
    h: np.ndarray
    eta_tilde: np.ndarray

    def copy(self) -> "TVPVARLatent":
        return TVPVARLatent(self.h.copy(), self.eta_tilde.copy())

    def to_units(self) -> np.ndarray:
        """``(T, 1 + q)`` array with rows ``(h_t, etatilde_t)``."""
        return np.column_stack([self.h, self.eta_tilde])

    @classmethod
    def from_units(cls, units: np.ndarray) -> "TVPVARLatent":
        units = np.asarray(units, dtype=float)
        return cls(units[:, 0].copy(), units[:, 1:].copy())


def canonical_sign(theta: np.ndarray, eta_tilde: np.ndarray, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Resolve the ``(sqrt_v_j, etatilde_j) -> (-sqrt_v_j, -etatilde_j)`` symmetry.

    The likelihood depends on ``sqrt_v`` and the states only through their
    product and ``sqrt_v^2``, so each pair is flipped to make ``sqrt_v_j >= 0``
    (``tau_{q+j} >= 0``).  Posterior means of either are only meaningful
    after this step.
    """
    theta = np.array(theta, dtype=float)
    eta_tilde = np.array(eta_tilde, dtype=float)
    flip = theta[q : 2 * q] < 0
    theta[q : 2 * q][flip] *= -1.0
    eta_tilde[..., flip] *= -1.0
    return theta, eta_tilde
