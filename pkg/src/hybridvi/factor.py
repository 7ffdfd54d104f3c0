"""Low-rank-plus-diagonal covariance algebra.

A ``FactorCovariance`` represents ``Sigma = B B^T + D^2`` with ``B`` an
``m x k`` matrix whose strictly upper-triangular entries are zero and
``D = diag(d)``.  Solves and log-determinants go through the Woodbury
identity and the matrix determinant lemma, so they cost ``O(m k^2 + k^3)``
and never build an ``m x m`` inverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg


class SingularInnerSystemError(np.linalg.LinAlgError):
    """Raised when the k x k capacitance matrix cannot be Cholesky factored."""


@dataclass(frozen=True)
class FactorCovariance:
    """Covariance ``B B^T + diag(d)^2``.

    Parameters
    ----------
    B : np.ndarray
        ``(m, k)`` loading matrix with ``B[i, j] == 0`` for ``j > i``.
        ``k = 0`` gives a diagonal covariance.
    d : np.ndarray
        ``(m,)`` strictly positive idiosyncratic scales.
    """

    B: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.B, dtype=float)
        d = np.asarray(self.d, dtype=float)
        if d.ndim != 1:
            raise ValueError("d must be a vector")
        if B.ndim != 2 or B.shape[0] != d.shape[0]:
            raise ValueError(f"B has shape {B.shape}, expected ({d.shape[0]}, k)")
        if B.shape[1] > B.shape[0]:
            raise ValueError("factor count k cannot exceed dimension m")
        if np.any(np.triu(B, 1) != 0.0):
            raise ValueError("B must have zero entries above the diagonal")
        if not np.all(d > 0):
            raise ValueError("d must be strictly positive")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "d", d)

    @property
    def m(self) -> int:
        return self.d.shape[0]

    @property
    def k(self) -> int:
        return self.B.shape[1]

    def dense(self) -> np.ndarray:
        """Return the full ``m x m`` covariance matrix."""
        return self.B @ self.B.T + np.diag(self.d**2)

    def _capacitance_cholesky(self):
        # I + B^T D^-2 B, symmetric positive definite by construction
        inv_d2 = 1.0 / self.d**2
        cap = np.eye(self.k) + self.B.T @ (inv_d2[:, None] * self.B)
        try:
            return linalg.cho_factor(cap, lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            raise SingularInnerSystemError(str(exc)) from exc


def woodbury_solve(fc: FactorCovariance, v: np.ndarray) -> np.ndarray:
    """Solve ``(B B^T + D^2) x = v``.

    ``v`` may be a vector of length ``m`` or an ``(m, n)`` matrix of
    right-hand sides.
    """
    v = np.asarray(v, dtype=float)
    if v.shape[0] != fc.m:
        raise ValueError(f"right-hand side has leading dimension {v.shape[0]}, expected {fc.m}")
    inv_d2 = 1.0 / fc.d**2
    if v.ndim == 2:
        inv_d2 = inv_d2[:, None]
    u = inv_d2 * v
    if fc.k == 0:
        return u
    chol = fc._capacitance_cholesky()
    t = linalg.cho_solve(chol, fc.B.T @ u, check_finite=False)
    return u - inv_d2 * (fc.B @ t)


def woodbury_logdet(fc: FactorCovariance) -> float:
    """Return ``log |B B^T + D^2|`` via the matrix determinant lemma."""
    logdet = 2.0 * np.sum(np.log(fc.d))
    if fc.k == 0:
        return float(logdet)
    c, _ = fc._capacitance_cholesky()
    return float(logdet + 2.0 * np.sum(np.log(np.diag(c))))


def woodbury_inverse(fc: FactorCovariance) -> np.ndarray:
    """Dense inverse; only intended for small ``m`` (e.g. random-effect blocks)."""
    return woodbury_solve(fc, np.eye(fc.m))


def sample_lowrank_normal(
    mu: np.ndarray, fc: FactorCovariance, zeta1: np.ndarray, zeta2: np.ndarray
) -> np.ndarray:
    """Map standard-normal inputs to ``mu + B zeta1 + d * zeta2``.

    Deterministic in its inputs, which is what the reparameterization
    gradient relies on.
    """
    zeta1 = np.asarray(zeta1, dtype=float)
    zeta2 = np.asarray(zeta2, dtype=float)
    if zeta1.shape != (fc.k,) or zeta2.shape != (fc.m,):
        raise ValueError(
            f"expected zeta1 of shape ({fc.k},) and zeta2 of shape ({fc.m},), "
            f"got {zeta1.shape} and {zeta2.shape}"
        )
    if np.shape(mu) != (fc.m,):
        raise ValueError("mu has the wrong length")
    return mu + fc.B @ zeta1 + fc.d * zeta2
