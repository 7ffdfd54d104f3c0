import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridvi.families import GaussianFactorVA
from hybridvi.sga import (
    AdadeltaState,
    FitConfig,
    LatentVariableModel,
    NonFiniteGradientError,
    UnsupportedModelError,
    adadelta_step,
    hybrid_gradient,
    run_sga,
    sample_subset,
    subsampled_gradient,
)
from hybridvi.toy import ConjugateToy


def diagonal_posterior_toy(rng, n=40, m=2):
    """Toy with orthogonal design columns, so the posterior covariance is diagonal."""
    base = ConjugateToy.simulate(n, m, rng)
    Q, _ = np.linalg.qr(rng.standard_normal((n, m)))
    return ConjugateToy(3.0 * Q, base.y)


# -- ADADELTA ------------------------------------------------------------------


def test_adadelta_zero_gradient():
    step, state = adadelta_step(AdadeltaState.zeros(3), np.zeros(3))
    np.testing.assert_array_equal(step, 0.0)
    assert np.all(state.acc_grad_sq == 0) and np.all(state.acc_step_sq == 0)


def test_adadelta_first_step():
    step, _ = adadelta_step(AdadeltaState.zeros(1, 0.95, 1e-6), np.array([1.0]))
    assert step[0] == pytest.approx(np.sqrt(1e-6) / np.sqrt(0.05 + 1e-6), rel=1e-12)
    assert step[0] == pytest.approx(4.4721e-3, abs=1e-7)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=6), st.integers(1, 5))
def test_adadelta_sign_and_nonnegative_accumulators(values, repeats):
    g = np.array(values)
    state = AdadeltaState.zeros(g.size)
    for _ in range(repeats):
        step, state = adadelta_step(state, g)
        np.testing.assert_array_equal(np.sign(step), np.sign(g))
        assert np.all(state.acc_grad_sq >= 0) and np.all(state.acc_step_sq >= 0)


# -- gradient estimators ---------------------------------------------------------


class ScoreStub(LatentVariableModel):
    """Model whose log g gradient equals the approximation's own score."""

    def __init__(self, va):
        self.va = va
        self.dim_theta = va.m

    def grad_log_g(self, theta, z):
        return self.va.score_theta(theta)


def test_gradient_vanishes_when_model_matches_score(rng):
    va = GaussianFactorVA.initial(4, 2)
    va = va.with_lambda(va.to_lambda() + rng.standard_normal(va.n_params) * 0.3)
    draw = va.sample_reparam(va.draw_epsilon(rng))
    np.testing.assert_array_equal(hybrid_gradient(ScoreStub(va), va, draw, None), 0.0)


def test_expected_gradient_zero_at_exact_posterior(rng):
    toy = diagonal_posterior_toy(rng)
    post_sd = np.sqrt(np.diag(toy.posterior_cov()))
    va = GaussianFactorVA.initial(2, 0, mu=toy.posterior_mean(), d0=1.0)
    va = va.with_lambda(np.concatenate([toy.posterior_mean(), post_sd]))
    np.testing.assert_allclose(toy.hybrid_objective_grad(va), 0.0, atol=1e-10)
    grads = []
    for _ in range(20000):
        draw = va.sample_reparam(va.draw_epsilon(rng))
        z = toy.sample_latent(draw.theta, None, 1, rng)
        grads.append(hybrid_gradient(toy, va, draw, z))
    grads = np.array(grads)
    se = grads.std(axis=0) / np.sqrt(len(grads))
    assert np.all(np.abs(grads.mean(axis=0)) <= 4 * se)


def test_full_subset_matches_hybrid_gradient(rng):
    toy = ConjugateToy.simulate(6, 3, rng)
    va = GaussianFactorVA.initial(3, 1, mu=rng.standard_normal(3))
    draw = va.sample_reparam(va.draw_epsilon(rng))
    z = toy.sample_latent(draw.theta, None, 1, rng)
    np.testing.assert_allclose(
        subsampled_gradient(toy, va, draw, z, np.arange(6)), hybrid_gradient(toy, va, draw, z), rtol=1e-13
    )


@pytest.mark.parametrize("n,size", [(5, 2), (4, 1)])
def test_subset_average_is_exact(rng, n, size):
    toy = ConjugateToy.simulate(n, 3, rng)
    theta, z = rng.standard_normal(3), rng.standard_normal(n)
    full = toy.grad_log_g(theta, z)
    subsets = list(itertools.combinations(range(n), size))
    avg = np.mean([toy.grad_log_g_units(theta, z, np.array(s)) for s in subsets], axis=0)
    np.testing.assert_allclose(avg, full, rtol=0, atol=1e-12)


def test_subsampling_needs_unit_gradients(rng):
    va = GaussianFactorVA.initial(2, 0)
    with pytest.raises(UnsupportedModelError):
        ScoreStub(va).grad_log_g_units(np.zeros(2), None, np.array([0]))


# -- subsets -----------------------------------------------------------------------


def test_subset_full_and_sorted(rng):
    np.testing.assert_array_equal(sample_subset(7, 7, rng), np.arange(7))
    for _ in range(100):
        s = sample_subset(20, 6, rng)
        assert np.all(np.diff(s) > 0) and s.max() < 20 and s.min() >= 0
    with pytest.raises(ValueError):
        sample_subset(3, 4, rng)


def test_subset_uniform(rng):
    draws = np.array([sample_subset(3, 1, rng)[0] for _ in range(30000)])
    freq = np.bincount(draws, minlength=3) / draws.size
    assert np.all(np.abs(freq - 1 / 3) <= 3 * np.sqrt((1 / 3) * (2 / 3) / draws.size))


# -- the loop ------------------------------------------------------------------


def test_zero_steps_returns_initial(rng):
    toy = ConjugateToy.simulate(5, 2, rng)
    va = GaussianFactorVA.initial(2, 1, mu=np.array([0.3, -0.2]))
    fit, trace = run_sga(toy, va, FitConfig(n_steps=0))
    np.testing.assert_array_equal(fit.to_lambda(), va.to_lambda())
    assert trace.steps == []


def test_recovers_conjugate_posterior(rng):
    toy = diagonal_posterior_toy(rng)
    fit, _ = run_sga(toy, GaussianFactorVA.initial(2, 0), FitConfig(n_steps=5000, seed=0, average_from=0.2))
    post_mean, post_var = toy.posterior_mean(), np.diag(toy.posterior_cov())
    # mean error measured in posterior standard deviations (the mean can be near zero)
    assert np.max(np.abs(fit.mu - post_mean) / np.sqrt(post_var)) <= 0.02
    assert np.max(np.abs(fit.cov.d**2 / post_var - 1.0)) <= 0.02


def test_deterministic_given_seed(rng):
    toy = ConjugateToy.simulate(10, 2, rng)
    cfg = FitConfig(n_steps=300, seed=11, trace_every=7)
    a_va, a = run_sga(toy, GaussianFactorVA.initial(2, 1), cfg)
    b_va, b = run_sga(toy, GaussianFactorVA.initial(2, 1), cfg)
    np.testing.assert_array_equal(a_va.to_lambda(), b_va.to_lambda())
    assert a.steps == b.steps and a.grad_norm == b.grad_norm
    for x, y in zip(a.lambdas, b.lambdas):
        np.testing.assert_array_equal(x, y)


def test_subsampled_run_refreshes_only_selected_units(rng):
    toy = ConjugateToy.simulate(8, 2, rng)
    z0 = np.full(8, 123.0)
    _, trace = run_sga(toy, GaussianFactorVA.initial(2, 0), FitConfig(n_steps=1, subsample_size=3, seed=2), z_init=z0)
    assert np.sum(trace.final_latent != 123.0) == 3


class Exploding(LatentVariableModel):
    dim_theta = 2

    def grad_log_g(self, theta, z):
        return np.array([np.nan, 0.0]) if z >= 3 else np.array([1e6, -1.0])

    def sample_latent(self, theta, z, n_sweeps, rng):
        return z + 1

    def init_latent(self, rng, theta=None):
        return 0


def test_non_finite_gradient_reports_step():
    with pytest.raises(NonFiniteGradientError) as err:
        run_sga(Exploding(), GaussianFactorVA.initial(2, 0), FitConfig(n_steps=10))
    assert err.value.step == 3


def test_clipping_is_counted():
    class Big(Exploding):
        def grad_log_g(self, theta, z):
            return np.array([1e6, -1.0])

    _, trace = run_sga(Big(), GaussianFactorVA.initial(2, 0), FitConfig(n_steps=4, trace_every=1))
    assert trace.n_clipped == 4


def test_plateau_stops_early(rng):
    class Flat(ConjugateToy):
        def diagnostic(self, theta, z):
            return 1.0

    base = ConjugateToy.simulate(5, 2, rng)
    toy = Flat(base.A, base.y)
    cfg = FitConfig(n_steps=10000, trace_every=10, plateau_window=500)
    _, trace = run_sga(toy, GaussianFactorVA.initial(2, 0), cfg)
    assert trace.stopped_early and trace.steps[-1] == 1000


def test_config_validation():
    with pytest.raises(ValueError):
        FitConfig(n_steps=10, n_sweeps=0)
    with pytest.raises(ValueError):
        FitConfig(n_steps=10, subsample_size=0)


def mean_hybrid_gradient(toy, va, n_draws, rng):
    grads = np.empty((n_draws, va.n_params))
    for s in range(n_draws):
        draw = va.sample_reparam(va.draw_epsilon(rng))
        grads[s] = hybrid_gradient(toy, va, draw, toy.sample_latent(draw.theta, None, 1, rng))
    return grads.mean(axis=0), grads.std(axis=0, ddof=1) / np.sqrt(n_draws)


def test_hybrid_gradient_unbiased(rng):
    toy = ConjugateToy.simulate(6, 3, rng)
    base = GaussianFactorVA.initial(3, 2)
    va = base.with_lambda(base.to_lambda() + rng.normal(0, 0.4, base.n_params))
    mean, se = mean_hybrid_gradient(toy, va, 20000, rng)
    assert np.all(np.abs(mean - toy.hybrid_objective_grad(va)) <= 4 * se)
