import numpy as np
import pytest
from scipy import stats

from hybridvi.diagnostics import grad_check
from hybridvi.factor import woodbury_inverse, woodbury_logdet
from hybridvi.tobit import (
    TobitData,
    TobitLatent,
    TobitMarginalPosterior,
    TobitMCMCConfig,
    TobitModel,
    TobitParams,
    assemble_v_alpha,
    censored_mean,
    grad_log_g_tobit,
    grad_log_g_units,
    heterogeneity,
    log_g_tobit,
    mcmc_tobit,
    rmse_metric,
    sample_alpha_conditional,
    sample_truncated_normal,
    sample_ystar_conditional,
    simulate_tobit,
)
from hybridvi.tobit.metrics import heterogeneity_draws
from hybridvi.tobit.model import TobitPrior, _log_prior, theta_size


def small_problem(rng, N=5, T=4, p=3, r=2, k_alpha=1):
    data, _ = simulate_tobit(N, T, p, r, k_alpha, None, rng)
    model = TobitModel(data, k_alpha)
    return data, model


def random_latent(data, rng):
    ystar = np.where(data.censored, -np.abs(rng.normal(size=data.y.shape)), data.y)
    return TobitLatent(rng.normal(size=(data.N, data.r)), ystar)


def random_params(model, rng, scale=0.5):
    return model.params(rng.normal(0, scale, model.dim_theta))


# -- parameters and V ---------------------------------------------------------------


def test_param_round_trip(rng):
    theta = rng.normal(size=theta_size(4, 3, 2))
    params = TobitParams.from_vector(theta, 4, 3, 2)
    np.testing.assert_array_equal(params.to_vector(), theta)
    L = params.L
    assert L.shape == (3, 2) and L[0, 1] == 0.0 and np.all(np.diag(L) > 0)
    again = TobitParams.from_natural(params.beta, params.sigma, params.omega, L)
    np.testing.assert_allclose(again.to_vector(), theta, rtol=1e-14, atol=1e-14)


def test_v_alpha_without_factors():
    params = TobitParams(np.zeros(2), np.log([2.0, 3.0]), 0.0, np.zeros(0), np.zeros(0))
    np.testing.assert_allclose(assemble_v_alpha(params).dense(), np.diag([2.0, 3.0]), rtol=1e-15, atol=0)


def test_v_alpha_scalar():
    params = TobitParams.from_natural([0.0], 1.0, [1.0], [[1.0]])
    np.testing.assert_allclose(assemble_v_alpha(params).dense(), [[2.0]])


def test_v_alpha_dense_oracle(rng):
    params = TobitParams.from_vector(rng.normal(0, 0.5, theta_size(2, 10, 2)), 2, 10, 2)
    V = assemble_v_alpha(params)
    dense = params.L @ params.L.T + np.diag(params.omega)
    np.testing.assert_allclose(V.dense(), dense, rtol=1e-14)
    assert woodbury_logdet(V) == pytest.approx(np.linalg.slogdet(dense)[1], rel=1e-10)
    np.testing.assert_allclose(woodbury_inverse(V), np.linalg.inv(dense), rtol=1e-10, atol=1e-12)


# -- log g and its gradient -------------------------------------------------------------


def zero_residual_latent(data, params, rng):
    alpha = rng.normal(size=(data.N, data.r))
    eta = data.X @ params.beta + np.einsum("ntr,nr->nt", data.W, alpha)
    return TobitLatent(alpha, eta)


def test_c_gradient_with_zero_residuals(rng):
    data, model = small_problem(rng)
    params = random_params(model, rng)
    g = grad_log_g_tobit(data, params, zero_residual_latent(data, params, rng))
    assert g[data.p + data.r] == data.n


def test_beta_gradient_with_zero_residuals_and_beta(rng):
    data, model = small_problem(rng)
    theta = rng.normal(0, 0.5, model.dim_theta)
    theta[: data.p] = 0.0
    params = model.params(theta)
    g = grad_log_g_tobit(data, params, zero_residual_latent(data, params, rng))
    np.testing.assert_array_equal(g[: data.p], 0.0)


def test_gradient_matches_differences(rng):
    data, model = small_problem(rng)
    worst = 0.0
    for _ in range(10):
        z = random_latent(data, rng)
        report = grad_check(
            lambda t: model.log_g(t, z), lambda t: model.grad_log_g(t, z), rng.normal(0, 0.7, model.dim_theta), tol=1e-5
        )
        assert report.passed, report.to_frame()
        worst = max(worst, report.max_rel_error)
    assert worst < 1e-5


def test_gradient_with_two_factors(rng):
    data, model = small_problem(rng, N=4, T=3, p=4, r=3, k_alpha=2)
    z = random_latent(data, rng)
    report = grad_check(lambda t: model.log_g(t, z), lambda t: model.grad_log_g(t, z), rng.normal(0, 0.5, model.dim_theta))
    assert report.passed


def test_log_g_hand_value():
    data = TobitData(np.ones((1, 1, 1)), np.zeros((1, 1)), (0,))
    params = TobitParams(np.zeros(1), np.zeros(1), 0.0, np.zeros(0), np.zeros(0))
    z = TobitLatent(np.zeros((1, 1)), np.zeros((1, 1)))
    # likelihood -log(2 pi)/2, alpha prior -log(2 pi)/2, beta prior -log(200 pi)/2, xi prior -1
    expected = -np.log(2 * np.pi) - 0.5 * np.log(200 * np.pi) - 1.0
    assert log_g_tobit(data, params, z) == pytest.approx(expected, rel=1e-14)


def test_duplicated_rows_double_data_terms(rng):
    data, model = small_problem(rng)
    params = random_params(model, rng)
    z = random_latent(data, rng)
    twice = TobitData(np.concatenate([data.X, data.X]), np.concatenate([data.y, data.y]), data.w_cols)
    z2 = TobitLatent(np.concatenate([z.alpha, z.alpha]), np.concatenate([z.ystar, z.ystar]))
    prior = _log_prior(params, TobitPrior())
    single = log_g_tobit(data, params, z) - prior
    double = log_g_tobit(twice, params, z2) - prior
    assert double == pytest.approx(2 * single, rel=1e-13)


def test_log_g_slice_integrates(rng):
    data, model = small_problem(rng)
    z = random_latent(data, rng)
    theta = rng.normal(0, 0.3, model.dim_theta)

    def mass(n_points):
        grid = np.linspace(-15, 15, n_points)
        vals = []
        for b in grid:
            t = theta.copy()
            t[0] = b
            vals.append(model.log_g(t, z))
        vals = np.array(vals)
        return np.trapezoid(np.exp(vals - vals.max()), grid)

    coarse, fine = mass(2001), mass(4001)
    assert coarse > 0 and np.isfinite(coarse)
    assert fine == pytest.approx(coarse, rel=1e-6)


def test_log_g_uses_latent_utilities_only(rng):
    data, model = small_problem(rng)
    params = random_params(model, rng)
    z = random_latent(data, rng)
    other = TobitData(data.X, np.where(data.censored, 0.0, data.y + 1.0), data.w_cols)
    assert log_g_tobit(data, params, z) == log_g_tobit(other, params, z)


# -- per-unit gradients -------------------------------------------------------------------


def test_units_all_equals_full(rng):
    data, model = small_problem(rng)
    params = random_params(model, rng)
    z = random_latent(data, rng)
    np.testing.assert_allclose(
        grad_log_g_units(data, params, z, np.arange(data.N)), grad_log_g_tobit(data, params, z), rtol=1e-13
    )


def test_singleton_average_equals_full(rng):
    data, model = small_problem(rng, N=4)
    params = random_params(model, rng)
    z = random_latent(data, rng)
    avg = np.mean([grad_log_g_units(data, params, z, [i]) for i in range(4)], axis=0)
    np.testing.assert_allclose(avg, grad_log_g_tobit(data, params, z), rtol=0, atol=1e-12)


def test_empty_panel_gives_prior_and_random_effect_terms(rng):
    X = np.zeros((3, 0, 3))
    data = TobitData(X, np.zeros((3, 0)), (0, 1))
    model = TobitModel(data, 1)
    params = random_params(model, rng)
    z = TobitLatent(rng.normal(size=(3, 2)), np.zeros((3, 0)))
    g = grad_log_g_units(data, params, z, [0, 2])
    np.testing.assert_allclose(g[:3], -params.beta / 100.0)
    assert g[3 + 2] == 0.0


# -- conditional samplers ----------------------------------------------------------------


def test_truncated_normal_standard_mean(rng):
    draws = sample_truncated_normal(np.zeros(1_000_000), 1.0, rng)
    assert np.all(draws <= 0)
    se = draws.std() / np.sqrt(draws.size)
    assert abs(draws.mean() + np.sqrt(2 / np.pi)) <= 3 * se
    assert draws.mean() == pytest.approx(-0.7979, abs=5e-3)


def test_truncated_normal_inactive_truncation(rng):
    draws = sample_truncated_normal(np.full(100_000, -50.0), 1.0, rng)
    assert np.all(draws <= 0)
    assert abs(draws.mean() + 50.0) <= 4 / np.sqrt(draws.size)


@pytest.mark.parametrize("eta", [-3.0, 2.0, 8.0, 40.0])
def test_truncated_normal_against_scipy(rng, eta):
    draws = sample_truncated_normal(np.full(200_000, eta), 1.5, rng)
    ref = stats.truncnorm(-np.inf, (0 - eta) / 1.5, loc=eta, scale=1.5)
    assert np.all(draws <= 0) and np.all(np.isfinite(draws))
    assert abs(draws.mean() - ref.mean()) <= 4 * ref.std() / np.sqrt(draws.size)


def test_ystar_only_censored_cells_change(rng):
    data, model = small_problem(rng, N=20)
    params = random_params(model, rng)
    z = random_latent(data, rng)
    new = sample_ystar_conditional(data, params, z, rng)
    np.testing.assert_array_equal(new[~data.censored], data.y[~data.censored])
    assert np.all(new[data.censored] <= 0)


def replicated_unit_data(rng, copies, T=6):
    X1 = np.concatenate([np.ones((1, T, 1)), rng.normal(size=(1, T, 2))], axis=2)
    y1 = np.maximum(rng.normal(size=(1, T)), 0)
    return TobitData(np.repeat(X1, copies, axis=0), np.repeat(y1, copies, axis=0), (0, 1))


def test_alpha_conditional_moments(rng):
    data = replicated_unit_data(rng, 100_000)
    model = TobitModel(data, 1)
    params = random_params(model, rng)
    z = random_latent(replicated_unit_data(np.random.default_rng(5), 1), rng)
    z = TobitLatent(np.zeros((data.N, 2)), np.repeat(z.ystar, data.N, axis=0))
    draws = sample_alpha_conditional(data, params, z, rng)
    prec = np.exp(2 * params.c)
    Vinv = np.linalg.inv(assemble_v_alpha(params).dense())
    w = data.W[0]
    A = Vinv + prec * w.T @ w
    M = prec * (z.ystar[0] - data.X[0] @ params.beta) @ w
    mean, cov = np.linalg.solve(A, M), np.linalg.inv(A)
    se = np.sqrt(np.diag(cov) / data.N)
    assert np.all(np.abs(draws.mean(axis=0) - mean) <= 4 * se)
    np.testing.assert_allclose(np.cov(draws.T), cov, rtol=0.02, atol=0.02 * np.max(np.abs(cov)))


def test_alpha_conditional_without_observations(rng):
    data = TobitData(np.zeros((200_000, 0, 2)), np.zeros((200_000, 0)), (0, 1))
    params = TobitParams.from_natural([0.0, 0.0], 1.0, [0.5, 0.2], [[0.8], [0.4]])
    z = TobitLatent(np.zeros((data.N, 2)), np.zeros((data.N, 0)))
    draws = sample_alpha_conditional(data, params, z, rng)
    np.testing.assert_allclose(np.cov(draws.T), assemble_v_alpha(params).dense(), atol=0.01)


def test_alpha_conditional_noisy_limit_is_prior(rng):
    data = replicated_unit_data(rng, 200_000)
    params = TobitParams.from_natural([0.1, 0.2, 0.3], 1e4, [0.5, 0.2], [[0.8], [0.4]])
    z = TobitLatent(np.zeros((data.N, 2)), np.where(data.censored, -1.0, data.y))
    draws = sample_alpha_conditional(data, params, z, rng)
    np.testing.assert_allclose(np.cov(draws.T), assemble_v_alpha(params).dense(), atol=0.01)
    assert np.all(np.abs(draws.mean(axis=0)) < 0.01)


def test_gibbs_leaves_conditional_invariant(rng):
    data, model = small_problem(rng)
    theta = model.params(np.zeros(model.dim_theta)).to_vector()
    theta[: data.p] = [0.2, 0.5, -0.4]

    def run(z, seed, n=40_000):
        r = np.random.default_rng(seed)
        out = np.empty((n, data.N * data.r + int(data.censored.sum())))
        for s in range(n):
            z = model.sample_latent(theta, z, 1, r)
            out[s] = np.concatenate([z.alpha.ravel(), z.ystar_u(data)])
        return out

    warm = run(model.init_latent(np.random.default_rng(1), theta), 2)
    cold_start = TobitLatent(np.full((data.N, data.r), 5.0), np.where(data.censored, -20.0, data.y))
    cold = run(cold_start, 3)[1000:]
    warm = warm[1000:]
    # batch-means standard errors
    def se(x):
        batches = x[: len(x) // 50 * 50].reshape(50, -1, x.shape[1]).mean(axis=1)
        return batches.std(axis=0, ddof=1) / np.sqrt(50)

    diff = np.abs(warm.mean(axis=0) - cold.mean(axis=0))
    assert np.all(diff <= 4.5 * np.sqrt(se(warm) ** 2 + se(cold) ** 2))
    np.testing.assert_allclose(warm.std(axis=0), cold.std(axis=0), rtol=0.05)


# -- the marginal posterior used by the benchmarks -------------------------------------------


def test_marginal_posterior_gradient(rng):
    data, model = small_problem(rng)
    post = TobitMarginalPosterior(data, 1)
    for _ in range(5):
        psi = rng.normal(0, 0.6, post.dim)
        report = grad_check(post.log_density, post.grad, psi, tol=1e-5)
        assert report.passed, report.to_frame()


def test_marginal_posterior_integrates_latent_utilities(rng):
    # with one censored cell, integrating y* over (-inf, 0] reproduces the censored term
    data = TobitData(np.ones((1, 1, 1)), np.zeros((1, 1)), (0,))
    model = TobitModel(data, 0)
    post = TobitMarginalPosterior(data, 0)
    theta = np.array([0.3, -0.2, 0.1])
    alpha = np.array([0.4])
    grid = np.linspace(-40, 0, 200_001)
    params = model.params(theta)
    eta = params.beta[0] + alpha[0]
    dens = stats.norm.pdf(grid, eta, params.sigma)
    base = model.log_g(theta, TobitLatent(alpha[None], np.array([[eta]]))) - stats.norm.logpdf(eta, eta, params.sigma)
    integral = np.log(np.trapezoid(dens, grid)) + base
    assert post.log_density(np.concatenate([theta, alpha])) == pytest.approx(integral, abs=1e-8)


# -- MCMC ---------------------------------------------------------------------------------


def test_mcmc_zero_sweeps(rng):
    data, model = small_problem(rng)
    theta0 = rng.normal(size=model.dim_theta)
    z0 = random_latent(data, rng)
    chain = mcmc_tobit(data, TobitMCMCConfig(n_sweeps=0), rng, theta0=theta0, latent0=z0)
    assert chain.theta_draws.shape == (0, model.dim_theta)
    np.testing.assert_array_equal(chain.final_theta, theta0)
    np.testing.assert_array_equal(chain.final_latent.alpha, z0.alpha)
    np.testing.assert_array_equal(chain.final_latent.ystar, z0.ystar)


def test_mcmc_adapts_from_truth(rng):
    data, truth = simulate_tobit(100, 10, 4, 2, 1, None, rng)
    chain = mcmc_tobit(data, TobitMCMCConfig(n_sweeps=6000), rng, theta0=truth.params.to_vector())
    assert np.all(np.isfinite(chain.theta_draws))
    assert np.all((chain.acceptance >= 0.10) & (chain.acceptance <= 0.20))
    assert chain.acceptance_flags().size == 0
    table = chain.ess()
    assert list(table["parameter"]) == chain.names and np.all(table["ess"] > 0)


def test_mcmc_recovers_beta(rng):
    data, truth = simulate_tobit(100, 20, 4, 2, 1, None, rng)
    chain = mcmc_tobit(data, TobitMCMCConfig(n_sweeps=20000), rng)
    beta_mean, beta_sd = chain.theta_mean[:4], chain.theta_sd[:4]
    assert np.all(np.abs(beta_mean - truth.params.beta) <= 3 * beta_sd)


def test_mcmc_thinning(rng):
    data, _ = small_problem(rng)
    chain = mcmc_tobit(data, TobitMCMCConfig(n_sweeps=1000, max_draws=150), rng)
    assert chain.thin == 4 and chain.theta_draws.shape[0] == 125


# -- simulation --------------------------------------------------------------------------


def test_simulate_all_censored_limit(rng):
    params = TobitParams.from_natural(np.zeros(3), 1e-12, np.full(2, 1e-30), [[1e-15], [0.0]])
    data, _ = simulate_tobit(30, 5, 3, 2, 1, params, rng)
    assert np.all(data.y <= 1e-10)


def test_simulate_censoring_fraction(rng):
    data, truth = simulate_tobit(400, 30, 4, 2, 1, None, rng)
    p = truth.params
    eta = data.X @ p.beta + np.einsum("ntr,nr->nt", data.W, truth.alpha)
    expected = stats.norm.cdf(-eta / p.sigma)
    se = np.sqrt(np.sum(expected * (1 - expected))) / data.n
    assert abs(data.censored.mean() - expected.mean()) <= 4 * se


def test_simulate_deterministic():
    a, _ = simulate_tobit(10, 4, 4, 2, 1, None, np.random.default_rng(3))
    b, _ = simulate_tobit(10, 4, 4, 2, 1, None, np.random.default_rng(3))
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.y, b.y)


def test_simulated_covariate_scheme(rng):
    data, _ = simulate_tobit(50, 8, 5, 2, 1, None, rng)
    np.testing.assert_array_equal(data.X[..., 0], 1.0)
    assert set(np.unique(data.X[..., -1])) <= {0.0, 1.0}
    assert data.w_cols == (0, 1)


# -- metrics ----------------------------------------------------------------------------------


def test_censored_mean_at_zero(rng):
    assert censored_mean(0.0, 1.0) == pytest.approx(0.3989, abs=1e-4)
    draws = np.maximum(rng.standard_normal(10_000_000), 0)
    assert abs(draws.mean() - censored_mean(0.0, 1.0)) <= 3 * draws.std() / np.sqrt(draws.size)


def test_censored_mean_small_sigma():
    assert censored_mean(1.7, 1e-9) == pytest.approx(1.7, rel=1e-12)


def test_rmse_zero_only_at_exact_fit(rng):
    data, model = small_problem(rng)
    params = random_params(model, rng)
    alpha = rng.normal(size=(data.N, data.r))
    assert rmse_metric(data, alpha, params) > 0
    eta = data.X @ params.beta + np.einsum("ntr,nr->nt", data.W, alpha)
    exact = TobitData(data.X, censored_mean(eta, params.sigma), data.w_cols)
    assert rmse_metric(exact, alpha, params) == 0.0


def test_heterogeneity_identity_on_basis_vectors():
    N, T, r = 6, 9, 3
    X = np.zeros((N, T, r))
    X[:, np.arange(T), np.arange(T) % r] = 1.0
    data = TobitData(X, np.zeros((N, T)), tuple(range(r)))
    values = heterogeneity_draws(data, np.eye(r), [0], [1, 2])
    assert values[0, 0] == pytest.approx(T / r)
    assert np.all(heterogeneity_draws(data, np.zeros((r, r)), [0], [1, 2]) == 0.0)


def test_heterogeneity_matches_loops(rng):
    data, _ = simulate_tobit(7, 5, 5, 4, 2, None, rng)
    A = rng.normal(size=(3, 4, 4))
    V = A @ np.swapaxes(A, 1, 2)
    focal, cross = [1, 2], [0, 3]
    values = heterogeneity_draws(data, V, focal, cross)
    for s in range(3):
        for j, block in enumerate([[0, 1, 2, 3], focal, cross]):
            total = 0.0
            for i in range(data.N):
                for t in range(data.T):
                    w = data.W[i, t, block]
                    total += w @ V[s][np.ix_(block, block)] @ w
            assert values[s, j] == pytest.approx(total / (data.N * data.r), rel=1e-12)
    table = heterogeneity(data, V, focal, cross)
    assert list(table["measure"]) == ["TH", "FBH", "CBH"]
    assert np.all(table["lower"] <= table["mean"]) and np.all(table["mean"] <= table["upper"])
