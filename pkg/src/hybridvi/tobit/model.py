"""Mixed-effects tobit model and the pieces the hybrid approximation needs.

    y*_{it} = x_{it}^T beta + w_{it}^T alpha_i + sigma eps_{it},   eps ~ N(0, 1)
    y_{it}  = max(y*_{it}, 0)
    alpha_i ~ N(0, V),   V = L L^T + diag(omega)

``w_{it}`` is a sub-vector of ``x_{it}`` selected by ``TobitData.w_cols``.
The unconstrained parameter vector is

    theta = (beta [p], xi [r], c, kappa [k_alpha], l [n_l])

with ``xi = log omega``, ``c = log(1 / sigma)``, ``kappa = log diag(L)`` and
``l`` the strictly-lower entries of the ``r x k_alpha`` loading matrix,
column by column.  The latent state is ``(alpha, y*)`` where ``y*`` equals
``y`` at uncensored cells and is non-positive at censored cells.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy.special import log_ndtr, ndtri_exp

from ..factor import FactorCovariance, woodbury_inverse, woodbury_logdet
from ..sga import LatentVariableModel

LOG_2PI = np.log(2.0 * np.pi)


# -- data -----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TobitData:
    """Balanced panel: ``X`` is ``(N, T, p)``, ``y`` is ``(N, T)`` and non-negative."""

    X: np.ndarray
    y: np.ndarray
    w_cols: tuple = (0,)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w_cols", tuple(int(j) for j in self.w_cols))
        if X.ndim != 3 or y.shape != X.shape[:2]:
            raise ValueError(f"X must be (N, T, p) and y (N, T); got {X.shape} and {y.shape}")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
            raise ValueError("data must be finite")
        if np.any(y < 0):
            raise ValueError("responses must be non-negative")
        if len(set(self.w_cols)) != len(self.w_cols) or not all(0 <= j < X.shape[2] for j in self.w_cols):
            raise ValueError("w_cols must be distinct column indices of X")

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def T(self) -> int:
        return self.X.shape[1]

    @property
    def p(self) -> int:
        return self.X.shape[2]

    @property
    def r(self) -> int:
        return len(self.w_cols)

    @property
    def n(self) -> int:
        return self.N * self.T

    @cached_property
    def W(self) -> np.ndarray:
        return self.X[:, :, list(self.w_cols)]

    @cached_property
    def censored(self) -> np.ndarray:
        return self.y == 0.0

    @cached_property
    def wtw(self) -> np.ndarray:
        """Per-unit ``sum_t w_it w_it^T``, shape ``(N, r, r)``."""
        return np.einsum("ntj,ntk->njk", self.W, self.W)

    def subset(self, units) -> "TobitData":
        units = np.asarray(units, dtype=int)
        return TobitData(self.X[units], self.y[units], self.w_cols)


# -- parameters --------------------------------------------------------------------


@lru_cache(maxsize=None)
def loading_offdiag_indices(r: int, k_alpha: int) -> tuple[np.ndarray, np.ndarray]:
    """Strictly-lower entries of an ``r x k_alpha`` loading matrix, column by column."""
    rows, cols = [], []
    for j in range(k_alpha):
        for i in range(j + 1, r):
            rows.append(i)
            cols.append(j)
    return np.array(rows, dtype=int), np.array(cols, dtype=int)


def theta_size(p: int, r: int, k_alpha: int) -> int:
    return p + r + 1 + k_alpha + loading_offdiag_indices(r, k_alpha)[0].size


def theta_names(p: int, r: int, k_alpha: int) -> list[str]:
    rows, cols = loading_offdiag_indices(r, k_alpha)
    return (
        [f"beta_{j}" for j in range(p)]
        + [f"xi_{j}" for j in range(r)]
        + ["c"]
        + [f"kappa_{j}" for j in range(k_alpha)]
        + [f"l_{i}_{j}" for i, j in zip(rows, cols)]
    )


@dataclass(frozen=True)
class TobitParams:
    beta: np.ndarray
    xi: np.ndarray
    c: float
    kappa: np.ndarray
    l: np.ndarray

    @classmethod
    def from_vector(cls, theta: np.ndarray, p: int, r: int, k_alpha: int) -> "TobitParams":
        if not 0 <= k_alpha <= r:
            raise ValueError(f"k_alpha must lie in [0, r={r}]")
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (theta_size(p, r, k_alpha),):
            raise ValueError(f"theta has shape {theta.shape}, expected ({theta_size(p, r, k_alpha)},)")
        i = 0
        beta = theta[i : i + p]
        i += p
        xi = theta[i : i + r]
        i += r
        c = float(theta[i])
        i += 1
        kappa = theta[i : i + k_alpha]
        i += k_alpha
        return cls(beta, xi, c, kappa, theta[i:])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.beta, self.xi, [self.c], self.kappa, self.l])

    @property
    def r(self) -> int:
        return self.xi.size

    @property
    def k_alpha(self) -> int:
        return self.kappa.size

    @property
    def sigma(self) -> float:
        return float(np.exp(-self.c))

    @property
    def omega(self) -> np.ndarray:
        return np.exp(self.xi)

    @property
    def L(self) -> np.ndarray:
        L = np.zeros((self.r, self.k_alpha))
        idx = np.arange(self.k_alpha)
        L[idx, idx] = np.exp(self.kappa)
        rows, cols = loading_offdiag_indices(self.r, self.k_alpha)
        L[rows, cols] = self.l
        return L

    @classmethod
    def from_natural(cls, beta, sigma, omega, L) -> "TobitParams":
        """Build from ``(beta, sigma, omega, L)``; ``L`` needs a positive diagonal."""
        L = np.atleast_2d(np.asarray(L, dtype=float))
        r, k = L.shape
        diag = np.diag(L[:k, :k]) if k else np.zeros(0)
        if np.any(diag <= 0) or np.any(np.triu(L, 1)[:k] != 0):
            raise ValueError("L must be lower trapezoidal with a positive diagonal")
        rows, cols = loading_offdiag_indices(r, k)
        return cls(
            np.asarray(beta, dtype=float),
            np.log(np.asarray(omega, dtype=float)),
            float(-np.log(sigma)),
            np.log(diag),
            L[rows, cols].copy(),
        )


def assemble_v_alpha(params: TobitParams) -> FactorCovariance:
    """``V = L L^T + diag(omega)`` as a factor covariance (use ``.dense()`` for the matrix)."""
    return FactorCovariance(params.L, np.sqrt(params.omega))


@dataclass(frozen=True)
class TobitPrior:
    """``beta ~ N(0, beta_var I)``; ``loading_var`` is the variance of every entry of ``L``."""

    beta_var: float = 100.0
    loading_var: float = 100.0


@dataclass
class TobitLatent:
    """``alpha`` is ``(N, r)``; ``ystar`` is ``(N, T)`` and equals ``y`` where ``y > 0``."""

    alpha: np.ndarray
    ystar: np.ndarray

    def ystar_u(self, data: TobitData) -> np.ndarray:
        return self.ystar[data.censored]

    def copy(self) -> "TobitLatent":
        return TobitLatent(self.alpha.copy(), self.ystar.copy())


# -- log density and gradient ---------------------------------------------------------


def _linear_predictor(X, W, beta, alpha) -> np.ndarray:
    return X @ beta + np.einsum("ntr,nr->nt", W, alpha)


def _log_prior(params: TobitParams, prior: TobitPrior) -> float:
    p = params.beta.size
    lp = -0.5 * (p * np.log(2 * np.pi * prior.beta_var) + params.beta @ params.beta / prior.beta_var)
    L = params.L
    n_loadings = params.k_alpha + params.l.size
    lp += params.k_alpha * np.log(2.0) - 0.5 * n_loadings * np.log(2 * np.pi * prior.loading_var)
    lp += -np.sum(L**2) / (2 * prior.loading_var) + np.sum(params.kappa)
    lp += -np.sum(params.xi + np.exp(-params.xi))
    return float(lp)


def _grad_prior(params: TobitParams, prior: TobitPrior) -> np.ndarray:
    L = params.L
    g_L = -L / prior.loading_var
    return _pack_gradient(params, -params.beta / prior.beta_var, -1.0 + np.exp(-params.xi), 0.0, g_L, kappa_jac=True)


def _pack_gradient(params, g_beta, g_xi, g_c, g_L, kappa_jac=False) -> np.ndarray:
    k = params.k_alpha
    idx = np.arange(k)
    g_kappa = g_L[idx, idx] * np.exp(params.kappa)
    if kappa_jac:
        g_kappa = g_kappa + 1.0
    rows, cols = loading_offdiag_indices(params.r, k)
    return np.concatenate([g_beta, g_xi, [g_c], g_kappa, g_L[rows, cols]])


def log_g_tobit(data: TobitData, params: TobitParams, latent: TobitLatent, prior: TobitPrior = TobitPrior()) -> float:
    """``log p(y*, alpha, theta)`` including all normalizing constants."""
    eta = _linear_predictor(data.X, data.W, params.beta, latent.alpha)
    resid = latent.ystar - eta
    n, N, r = data.n, data.N, data.r
    lik = -0.5 * n * LOG_2PI + n * params.c - 0.5 * np.exp(2 * params.c) * np.sum(resid**2)
    V = assemble_v_alpha(params)
    Vinv = woodbury_inverse(V)
    S = latent.alpha.T @ latent.alpha
    lalpha = -0.5 * (N * r * LOG_2PI + N * woodbury_logdet(V) + np.sum(Vinv * S))
    return float(lik + lalpha + _log_prior(params, prior))


def _grad_units(data, params, alpha, ystar, units, weight) -> np.ndarray:
    """Likelihood and alpha-prior gradient over ``units``, multiplied by ``weight``."""
    X, W = data.X[units], data.W[units]
    a = alpha[units]
    resid = ystar[units] - _linear_predictor(X, W, params.beta, a)
    prec = np.exp(2 * params.c)
    g_beta = weight * prec * np.einsum("nt,ntp->p", resid, X)
    g_c = weight * (resid.size - prec * np.sum(resid**2))
    g_L, g_xi = _random_effect_gradient(params, a, weight)
    return _pack_gradient(params, g_beta, g_xi, g_c, g_L)


def _random_effect_gradient(params: TobitParams, alpha: np.ndarray, weight: float = 1.0):
    """Gradients of ``sum_i log N(alpha_i; 0, V)`` with respect to ``L`` and ``xi``."""
    Vinv = woodbury_inverse(assemble_v_alpha(params))
    S = alpha.T @ alpha
    # d/dV of -(n/2) log|V| - (1/2) tr(V^-1 S)
    G = weight * 0.5 * (Vinv @ S @ Vinv - alpha.shape[0] * Vinv)
    return 2.0 * G @ params.L, np.diag(G) * params.omega


def grad_log_g_tobit(data: TobitData, params: TobitParams, latent: TobitLatent, prior: TobitPrior = TobitPrior()) -> np.ndarray:
    """Gradient of :func:`log_g_tobit` in the unconstrained ``theta``."""
    units = np.arange(data.N)
    return _grad_units(data, params, latent.alpha, latent.ystar, units, 1.0) + _grad_prior(params, prior)


def grad_log_g_units(data, params, latent, units, prior: TobitPrior = TobitPrior()) -> np.ndarray:
    """``N / |S|`` times the per-individual gradient terms over ``units``, plus the prior gradient."""
    units = np.asarray(units, dtype=int)
    weight = data.N / units.size
    return _grad_units(data, params, latent.alpha, latent.ystar, units, weight) + _grad_prior(params, prior)


# -- conditional samplers ----------------------------------------------------------------


def sample_truncated_normal(mean, sd, rng: np.random.Generator, upper: float = 0.0) -> np.ndarray:
    """Draws from ``N(mean, sd^2)`` truncated to ``(-inf, upper]`` by inversion in log space.

    Working with ``log Phi`` keeps both tails accurate: the truncation mass
    ``Phi((upper - mean) / sd)`` can be astronomically small without underflow.
    """
    mean = np.asarray(mean, dtype=float)
    sd = np.broadcast_to(np.asarray(sd, dtype=float), mean.shape)
    log_mass = log_ndtr((upper - mean) / sd)
    u = 1.0 - rng.random(mean.shape)  # in (0, 1]
    draw = mean + sd * ndtri_exp(np.log(u) + log_mass)
    return np.minimum(draw, upper)


def _alpha_precision_system(data: TobitData, params: TobitParams, ystar: np.ndarray, units):
    """Per-unit precision ``A_i`` and linear term ``M_i`` of the ``alpha_i`` full conditional."""
    prec = np.exp(2 * params.c)
    Vinv = woodbury_inverse(assemble_v_alpha(params))
    partial = ystar[units] - data.X[units] @ params.beta
    M = prec * np.einsum("nt,ntr->nr", partial, data.W[units])
    A = Vinv + prec * data.wtw[units]
    return A, M


def alpha_conditional_moments(data: TobitData, params: TobitParams, ystar: np.ndarray, units=None):
    """Mean ``A_i^{-1} M_i`` and covariance ``A_i^{-1}`` of every ``alpha_i`` given ``(theta, y*)``."""
    units = np.arange(data.N) if units is None else np.asarray(units, dtype=int)
    A, M = _alpha_precision_system(data, params, ystar, units)
    cov = np.linalg.inv(A)
    return np.einsum("nij,nj->ni", cov, M), cov


def sample_alpha_conditional(data: TobitData, params: TobitParams, latent: TobitLatent, rng, units=None) -> np.ndarray:
    """Draw every ``alpha_i`` (or those in ``units``) from its Gaussian full conditional."""
    units = np.arange(data.N) if units is None else np.asarray(units, dtype=int)
    A, M = _alpha_precision_system(data, params, latent.ystar, units)
    chol = np.linalg.cholesky(A)
    mean = np.linalg.solve(A, M[..., None])[..., 0]
    # alpha = mean + chol^{-T} z has covariance A^{-1}
    z = rng.standard_normal(M.shape)
    noise = np.linalg.solve(np.swapaxes(chol, 1, 2), z[..., None])[..., 0]
    alpha = latent.alpha.copy()
    alpha[units] = mean + noise
    return alpha


def sample_ystar_conditional(data: TobitData, params: TobitParams, latent: TobitLatent, rng, units=None) -> np.ndarray:
    """Redraw ``y*`` at censored cells from ``N(eta, sigma^2)`` truncated to ``(-inf, 0]``."""
    units = np.arange(data.N) if units is None else np.asarray(units, dtype=int)
    ystar = latent.ystar.copy()
    cens = data.censored[units]
    eta = _linear_predictor(data.X[units], data.W[units], params.beta, latent.alpha[units])
    block = ystar[units]
    block[cens] = sample_truncated_normal(eta[cens], params.sigma, rng)
    ystar[units] = block
    return ystar


# -- model wrapper for the SGA engine ---------------------------------------------------------


@dataclass(eq=False)
class TobitModel(LatentVariableModel):
    """Hybrid-approximation interface: ``theta`` as above, ``z = (alpha, y*)``.

    ``sample_latent`` runs ``n_sweeps`` of the two-block Gibbs sampler
    ``alpha | y*, theta`` then ``y* | alpha, theta``, whose invariant
    distribution is ``p(alpha, y*_U | theta, y)``.
    """

    data: TobitData
    k_alpha: int = 1
    prior: TobitPrior = field(default_factory=TobitPrior)

    @property
    def dim_theta(self) -> int:
        return theta_size(self.data.p, self.data.r, self.k_alpha)

    @property
    def unit_count(self) -> int:
        return self.data.N

    @property
    def names(self) -> list[str]:
        return theta_names(self.data.p, self.data.r, self.k_alpha)

    def params(self, theta: np.ndarray) -> TobitParams:
        return TobitParams.from_vector(theta, self.data.p, self.data.r, self.k_alpha)

    def log_g(self, theta, z: TobitLatent) -> float:
        return log_g_tobit(self.data, self.params(theta), z, self.prior)

    def grad_log_g(self, theta, z: TobitLatent) -> np.ndarray:
        return grad_log_g_tobit(self.data, self.params(theta), z, self.prior)

    def grad_log_g_units(self, theta, z: TobitLatent, units) -> np.ndarray:
        return grad_log_g_units(self.data, self.params(theta), z, units, self.prior)

    def sample_latent(self, theta, z: TobitLatent, n_sweeps: int, rng) -> TobitLatent:
        return self.sample_latent_units(theta, z, None, n_sweeps, rng)

    def sample_latent_units(self, theta, z: TobitLatent, units, n_sweeps: int, rng) -> TobitLatent:
        params = self.params(theta)
        z = z.copy()
        for _ in range(n_sweeps):
            z.alpha = sample_alpha_conditional(self.data, params, z, rng, units)
            z.ystar = sample_ystar_conditional(self.data, params, z, rng, units)
        return z

    def init_latent(self, rng, theta=None) -> TobitLatent:
        """``alpha = 0`` and ``y*_U`` drawn from its conditional at ``theta`` (zeros if absent)."""
        theta = np.zeros(self.dim_theta) if theta is None else theta
        z = TobitLatent(np.zeros((self.data.N, self.data.r)), self.data.y.copy())
        z.ystar = sample_ystar_conditional(self.data, self.params(theta), z, rng)
        return z

    def diagnostic(self, theta, z: TobitLatent) -> float:
        from .metrics import rmse_metric

        return rmse_metric(self.data, z.alpha, self.params(theta))
