import numpy as np
import pytest

from hybridvi.benchmarks import AugmentedGaussianVA, block_optimal_moments, fit_augmented_benchmark
from hybridvi.diagnostics import elbo_estimate
from hybridvi.families import GaussianFactorVA
from hybridvi.sga import FitConfig
from hybridvi.toy import ConjugateToy


def random_augmented(rng, head_dim=3, head_k=2, n_units=4, unit_dim=2, unit_k=1):
    va = AugmentedGaussianVA.initial(head_dim, head_k, n_units, unit_dim, unit_k)
    lam = rng.normal(0, 0.5, va.to_lambda().size)
    return va.with_lambda(lam)


def dense_augmented(va):
    blocks = [va.head.cov.dense()] + list(va._unit_cov())
    size = sum(b.shape[0] for b in blocks)
    cov = np.zeros((size, size))
    pos = 0
    for b in blocks:
        cov[pos : pos + b.shape[0], pos : pos + b.shape[0]] = b
        pos += b.shape[0]
    return cov


def test_lambda_round_trip(rng):
    va = random_augmented(rng)
    np.testing.assert_array_equal(va.with_lambda(va.to_lambda()).to_lambda(), va.to_lambda())
    assert va.m == 3 + 4 * 2


@pytest.mark.parametrize("unit_k", [0, 1])
def test_log_density_matches_dense(rng, unit_k):
    from scipy import stats

    va = random_augmented(rng, unit_k=unit_k)
    psi = va.sample(rng, 5)
    dense = stats.multivariate_normal(va.mean(), dense_augmented(va)).logpdf(psi)
    np.testing.assert_allclose(va.log_density(psi), dense, rtol=1e-10)


@pytest.mark.parametrize("unit_k", [0, 1])
def test_score_and_jacobian_by_differences(rng, unit_k):
    va = random_augmented(rng, unit_k=unit_k)
    psi = va.sample(rng, 1)[0]
    h = 1e-6
    fd = np.array([(va.log_density(psi + h * e)[0] - va.log_density(psi - h * e)[0]) / (2 * h) for e in np.eye(va.m)])
    np.testing.assert_allclose(va.score_theta(psi), fd, rtol=1e-6, atol=1e-6)

    eps = va.draw_epsilon(rng)
    draw = va.sample_reparam(eps)
    g = rng.standard_normal(va.m)
    lam = va.to_lambda()
    fd = np.empty(lam.size)
    for j in range(lam.size):
        up, dn = lam.copy(), lam.copy()
        up[j] += h
        dn[j] -= h
        fd[j] = g @ (va.with_lambda(up).sample_reparam(eps).theta - va.with_lambda(dn).sample_reparam(eps).theta) / (2 * h)
    np.testing.assert_allclose(va.jacobian_action(draw, g), fd, rtol=1e-6, atol=1e-7)


def test_sample_moments(rng):
    va = random_augmented(rng, n_units=2)
    draws = va.sample(rng, 200_000)
    cov = dense_augmented(va)
    se = np.sqrt(np.diag(cov) / draws.shape[0])
    assert np.all(np.abs(draws.mean(axis=0) - va.mean()) <= 4 * se)
    np.testing.assert_allclose(np.cov(draws.T), cov, atol=0.02)


def test_block_optimal_single_block_is_target():
    P = np.array([[2.0, 0.5], [0.5, 1.0]])
    mean = np.array([1.0, -1.0])
    ((m, c),) = block_optimal_moments(P, mean, [[0, 1]])
    np.testing.assert_allclose(c, np.linalg.inv(P))
    np.testing.assert_array_equal(m, mean)


def orthogonal_toy(rng, n=10, m=2):
    base = ConjugateToy.simulate(n, m, rng)
    Q, _ = np.linalg.qr(rng.standard_normal((n, m)))
    return ConjugateToy(3.0 * Q, base.y)


def test_mean_field_recovers_block_optimum(rng):
    toy = orthogonal_toy(rng)
    dim = toy.dim_theta + toy.unit_count
    opt = block_optimal_moments(toy.joint_precision(), toy.joint_mean(), [[j] for j in range(dim)])
    opt_mean = np.array([mean[0] for mean, _ in opt])
    opt_var = np.array([cov[0, 0] for _, cov in opt])
    va = AugmentedGaussianVA.initial(toy.dim_theta, 0, toy.unit_count, 1, 0)
    cfg = FitConfig(n_steps=20000, seed=0, average_from=0.2)
    fit, _ = fit_augmented_benchmark(toy.grad_log_g_augmented, va, cfg)
    assert np.max(np.abs(fit.mean() - opt_mean) / np.sqrt(opt_var)) <= 0.02
    assert np.max(np.abs(fit.marginal_sd() ** 2 / opt_var - 1.0)) <= 0.02


def test_factor_units_run_on_same_path(rng):
    toy = orthogonal_toy(rng, n=6)
    va = AugmentedGaussianVA.initial(toy.dim_theta, 1, toy.unit_count, 1, 1)
    fit, trace = fit_augmented_benchmark(toy.grad_log_g_augmented, va, FitConfig(n_steps=200, trace_every=50))
    assert trace.steps == [50, 100, 150, 200]
    assert np.all(np.isfinite(fit.to_lambda()))


def test_hybrid_objective_dominates_augmented_mean_field(rng):
    """The optimal hybrid objective is at least the optimal augmented mean-field ELBO."""
    toy = ConjugateToy.simulate(12, 2, rng)
    # hybrid with an unrestricted Gaussian q0: optimum is the exact marginal posterior
    cov = toy.posterior_cov()
    chol = np.linalg.cholesky(cov - 1e-4 * np.eye(2))
    q0 = GaussianFactorVA.initial(2, 2).with_lambda(
        np.concatenate([toy.posterior_mean(), chol[[0, 1, 1], [0, 0, 1]], np.full(2, 1e-2)])
    )
    hybrid, hybrid_se = elbo_estimate(toy.log_marginal_joint, q0, 100_000, rng)

    # augmented: full block over theta, independent Gaussians per latent
    blocks = [[0, 1]] + [[2 + i] for i in range(toy.unit_count)]
    opt = block_optimal_moments(toy.joint_precision(), toy.joint_mean(), blocks)
    head_cov = opt[0][1]
    head_chol = np.linalg.cholesky(head_cov - 1e-4 * np.eye(2))
    head = GaussianFactorVA.initial(2, 2).with_lambda(
        np.concatenate([opt[0][0], head_chol[[0, 1, 1], [0, 0, 1]], np.full(2, 1e-2)])
    )
    unit_mu = np.array([o[0] for o in opt[1:]])
    unit_d = np.sqrt(np.array([o[1][0] for o in opt[1:]]))
    aug = AugmentedGaussianVA(head, unit_mu, np.zeros((toy.unit_count, 1, 0)), unit_d)
    mf, mf_se = elbo_estimate(toy.log_g_augmented, aug, 100_000, rng)
    assert hybrid >= mf - hybrid_se
    assert hybrid == pytest.approx(toy.log_evidence(), abs=1e-8)
