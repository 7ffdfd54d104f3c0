"""Map per-equation coefficients back to the reduced-form VAR and back again.

Equation ``i`` has coefficients ``eta_i = (Gamma_{i,1}, ..., Gamma_{i,p}, gamma_{i,0}, l_i)``
with ``Gamma_{i,s}`` the ``i``-th row of the lag-``s`` matrix, ``gamma_{i,0}``
the intercept and ``l_i`` (length ``i``) the ``i``-th row of the
strictly-lower part of ``L^-1``.  Then

    beta_0 = L gamma_0,   B_s = L Gamma_s.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular


def _split(coefs: list, N: int, p: int):
    if len(coefs) != N:
        raise ValueError(f"need coefficients for {N} equations; got {len(coefs)}")
    Gamma = np.empty((p, N, N))
    gamma0 = np.empty(N)
    Linv = np.eye(N)
    for i, eta in enumerate(coefs):
        eta = np.asarray(eta, dtype=float)
        if eta.shape != (p * N + i + 1,):
            raise ValueError(f"equation {i} needs {p * N + i + 1} coefficients; got {eta.shape}")
        Gamma[:, i, :] = eta[: p * N].reshape(p, N)
        gamma0[i] = eta[p * N]
        Linv[i, :i] = eta[p * N + 1 :]
    return Gamma, gamma0, Linv


def recover_var_coefficients(coefs: list, N: int, p: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(beta_0, B, L)`` at one time point from the ``N`` equations' coefficient vectors.

    ``B`` has shape ``(p, N, N)``.  ``L`` is found from the unit lower
    triangular ``L^-1`` by forward substitution.
    """
    Gamma, gamma0, Linv = _split(coefs, N, p)
    L = solve_triangular(Linv, np.eye(N), lower=True, unit_diagonal=True)
    return L @ gamma0, L @ Gamma, L


def recover_paths(coef_paths: list, N: int, p: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """As :func:`recover_var_coefficients` for every row of ``(T, q_i)`` coefficient paths."""
    T = np.asarray(coef_paths[0]).shape[0]
    beta0 = np.empty((T, N))
    B = np.empty((T, p, N, N))
    L = np.empty((T, N, N))
    for t in range(T):
        beta0[t], B[t], L[t] = recover_var_coefficients([np.asarray(c)[t] for c in coef_paths], N, p)
    return beta0, B, L


def to_equation_form(beta0: np.ndarray, B: np.ndarray, L: np.ndarray) -> list[np.ndarray]:
    """Inverse of :func:`recover_var_coefficients` for a unit lower-triangular ``L``."""
    N = L.shape[0]
    Linv = solve_triangular(L, np.eye(N), lower=True, unit_diagonal=True)
    gamma0 = Linv @ beta0
    Gamma = Linv @ B
    return [np.concatenate([Gamma[:, i, :].ravel(), [gamma0[i]], Linv[i, :i]]) for i in range(N)]
