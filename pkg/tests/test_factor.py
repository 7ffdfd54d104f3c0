import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg

from conftest import random_factor
from hybridvi.factor import (
    FactorCovariance,
    sample_lowrank_normal,
    woodbury_inverse,
    woodbury_logdet,
    woodbury_solve,
)


def test_diagonal_solve():
    fc = FactorCovariance(np.zeros((2, 0)), np.array([2.0, 2.0]))
    np.testing.assert_allclose(woodbury_solve(fc, np.array([4.0, 8.0])), [1.0, 2.0])


def test_scalar_solve_and_logdet():
    fc = FactorCovariance(np.array([[1.0]]), np.array([1.0]))
    np.testing.assert_allclose(woodbury_solve(fc, np.array([2.0])), [1.0])
    assert woodbury_logdet(fc) == pytest.approx(np.log(2.0), abs=1e-15)


def test_identity_logdet():
    fc = FactorCovariance(np.zeros((3, 0)), np.ones(3))
    assert woodbury_logdet(fc) == 0.0


@pytest.mark.parametrize("k", [0, 1, 3, 5])
def test_matches_dense_cholesky(rng, k):
    fc = random_factor(rng, 50, k)
    v = rng.standard_normal(50)
    dense = fc.dense()
    expected = linalg.cho_solve(linalg.cho_factor(dense), v)
    got = woodbury_solve(fc, v)
    assert np.linalg.norm(got - expected) / np.linalg.norm(expected) <= 1e-10
    _, logdet = np.linalg.slogdet(dense)
    assert abs(woodbury_logdet(fc) - logdet) <= 1e-10 * max(1.0, abs(logdet))


def test_matrix_right_hand_side(rng):
    fc = random_factor(rng, 6, 2)
    np.testing.assert_allclose(woodbury_inverse(fc) @ fc.dense(), np.eye(6), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(m=st.integers(1, 100), k=st.integers(0, 6), seed=st.integers(0, 2**31))
def test_residual_and_eigen_logdet(m, k, seed):
    k = min(k, m)
    rng = np.random.default_rng(seed)
    fc = random_factor(rng, m, k, scale=2.0)
    v = rng.standard_normal(m)
    x = woodbury_solve(fc, v)
    dense = fc.dense()
    assert np.linalg.norm(dense @ x - v) <= 1e-9 * np.linalg.norm(v)
    eig = np.linalg.eigvalsh(dense)
    assert abs(woodbury_logdet(fc) - np.sum(np.log(eig))) <= 1e-8 * max(1.0, abs(np.sum(np.log(eig))))


def test_sample_mean_and_scalar_case():
    mu = np.array([1.0, -2.0])
    fc = FactorCovariance(np.array([[0.5], [0.2]]), np.array([1.0, 1.0]))
    np.testing.assert_array_equal(sample_lowrank_normal(mu, fc, np.zeros(1), np.zeros(2)), mu)
    fc0 = FactorCovariance(np.zeros((1, 0)), np.array([3.0]))
    np.testing.assert_allclose(sample_lowrank_normal(np.zeros(1), fc0, np.zeros(0), np.array([2.0])), [6.0])


def test_sample_is_affine(rng):
    fc = random_factor(rng, 5, 2)
    mu = rng.standard_normal(5)
    a1, a2 = rng.standard_normal(2), rng.standard_normal(5)
    b1, b2 = rng.standard_normal(2), rng.standard_normal(5)
    lhs = sample_lowrank_normal(mu, fc, a1, a2) + sample_lowrank_normal(mu, fc, b1, b2) - mu
    np.testing.assert_allclose(lhs, sample_lowrank_normal(mu, fc, a1 + b1, a2 + b2), atol=1e-13)


def test_sample_covariance_monte_carlo(rng):
    fc = FactorCovariance(np.array([[1.0, 0.0], [0.5, 0.8], [-0.3, 0.4]]), np.array([0.5, 0.7, 1.1]))
    n = 10**6
    z1 = rng.standard_normal((n, 2))
    z2 = rng.standard_normal((n, 3))
    mu = np.zeros(3)
    draws = np.array([sample_lowrank_normal(mu, fc, a, b) for a, b in zip(z1, z2)])
    emp = draws.T @ draws / n
    true = fc.dense()
    se = np.sqrt((true**2 + np.outer(np.diag(true), np.diag(true))) / n)
    assert np.all(np.abs(emp - true) <= 3 * se)


def test_invariants_enforced():
    with pytest.raises(ValueError):
        FactorCovariance(np.array([[1.0, 1.0], [0.0, 1.0]]), np.ones(2))
    with pytest.raises(ValueError):
        FactorCovariance(np.zeros((2, 1)), np.array([1.0, 0.0]))
    fc = FactorCovariance(np.zeros((2, 1)), np.ones(2))
    with pytest.raises(ValueError):
        woodbury_solve(fc, np.ones(3))
    with pytest.raises(ValueError):
        sample_lowrank_normal(np.zeros(2), fc, np.zeros(2), np.zeros(2))
