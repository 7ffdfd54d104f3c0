"""Stochastic gradient ascent for hybrid variational approximations.

The approximation is ``q(theta, z) = p(z | theta, y) q0(theta)``.  Each step
draws ``theta`` by reparameterization, refreshes the latent state with a few
sweeps of the model's conditional sampler (warm-started at the previous
step's state), forms the gradient

    (d theta / d lambda)^T [grad_theta log g(theta, z) - grad_theta log q0(theta)]

and applies an ADADELTA update.  Models that factor over units can supply
per-unit gradient terms so that a random subset of units is used per step.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


class UnsupportedModelError(TypeError):
    """The model does not provide an operation that was requested."""


class NonFiniteGradientError(FloatingPointError):
    """Raised when the gradient or the variational parameters become non-finite."""

    def __init__(self, step: int, what: str = "gradient"):
        super().__init__(f"non-finite {what} at SGA step {step}")
        self.step = step


class LatentVariableModel:
    """Contract between a latent-variable model and the SGA engine.

    Subclasses must set ``dim_theta`` and implement ``grad_log_g``,
    ``sample_latent`` and ``init_latent``.  Sub-sampling additionally needs
    ``unit_count``, ``grad_log_g_units`` and ``sample_latent_units``, where
    ``grad_log_g_units`` returns ``n / |S| * sum_{j in S} k_j + grad log p(theta)``
    so that averaging over subsets recovers ``grad_log_g``.
    """

    dim_theta: int
    unit_count: int | None = None

    def grad_log_g(self, theta: np.ndarray, z) -> np.ndarray:
        raise NotImplementedError

    def sample_latent(self, theta: np.ndarray, z, n_sweeps: int, rng: np.random.Generator):
        raise NotImplementedError

    def init_latent(self, rng: np.random.Generator, theta: np.ndarray | None = None):
        raise NotImplementedError

    def grad_log_g_units(self, theta: np.ndarray, z, units: np.ndarray) -> np.ndarray:
        raise UnsupportedModelError(f"{type(self).__name__} does not provide per-unit gradients")

    def sample_latent_units(self, theta, z, units, n_sweeps, rng):
        raise UnsupportedModelError(f"{type(self).__name__} does not provide per-unit latent sampling")

    def diagnostic(self, theta: np.ndarray, z) -> float | None:
        """Optional scalar tracked in the fit trace (e.g. an RMSE)."""
        return None


@dataclass(frozen=True)
class AdadeltaState:
    acc_grad_sq: np.ndarray
    acc_step_sq: np.ndarray
    rho_decay: float = 0.95
    epsilon_fuzz: float = 1e-6

    @classmethod
    def zeros(cls, n: int, rho_decay: float = 0.95, epsilon_fuzz: float = 1e-6):
        return cls(np.zeros(n), np.zeros(n), rho_decay, epsilon_fuzz)


def adadelta_step(state: AdadeltaState, grad: np.ndarray) -> tuple[np.ndarray, AdadeltaState]:
    """One ADADELTA update for gradient *ascent*; the caller adds the step."""
    rho, eps = state.rho_decay, state.epsilon_fuzz
    acc_g = rho * state.acc_grad_sq + (1.0 - rho) * grad**2
    step = np.sqrt(state.acc_step_sq + eps) / np.sqrt(acc_g + eps) * grad
    acc_d = rho * state.acc_step_sq + (1.0 - rho) * step**2
    return step, replace(state, acc_grad_sq=acc_g, acc_step_sq=acc_d)


@dataclass(frozen=True)
class FitConfig:
    """Settings for :func:`run_sga`.

    ``plateau_window`` enables an early stop once the mean model diagnostic
    over the last window changes by less than ``plateau_tol`` (relative) from
    the window before it.  Diagnostics are evaluated every ``trace_every``
    steps.

    ``average_from`` switches on iterate averaging: the returned
    approximation uses the mean of lambda over all steps after that fraction
    of ``n_steps``.  ADADELTA does not decay its step sizes, so the last
    iterate keeps fluctuating around the optimum; the average does not.
    """

    n_steps: int
    n_sweeps: int = 5
    subsample_size: int | None = None
    seed: int = 0
    trace_every: int = 100
    rho_decay: float = 0.95
    epsilon_fuzz: float = 1e-6
    clip: float = 1e4
    plateau_window: int | None = None
    plateau_tol: float = 1e-4
    record_lambda: bool = True
    average_from: float | None = None

    def __post_init__(self):
        if self.n_steps < 0:
            raise ValueError("n_steps must be non-negative")
        if self.n_sweeps < 1:
            raise ValueError("n_sweeps must be at least 1")
        if self.subsample_size is not None and self.subsample_size < 1:
            raise ValueError("subsample_size must be at least 1")
        if self.trace_every < 1:
            raise ValueError("trace_every must be at least 1")
        if self.average_from is not None and not 0.0 <= self.average_from < 1.0:
            raise ValueError("average_from must lie in [0, 1)")


@dataclass
class FitTrace:
    steps: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    diagnostic: list = field(default_factory=list)
    elapsed_ms: list = field(default_factory=list)
    lambdas: list = field(default_factory=list)
    n_clipped: int = 0
    stopped_early: bool = False
    final_latent: object = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "step": np.asarray(self.steps, dtype=int),
                "grad_norm": np.asarray(self.grad_norm, dtype=float),
                "diagnostic": np.array([np.nan if v is None else v for v in self.diagnostic], dtype=float),
                "elapsed_ms": np.asarray(self.elapsed_ms, dtype=float),
            }
        )


def hybrid_gradient(model: LatentVariableModel, va, draw, z) -> np.ndarray:
    """Single-draw estimate of the ELBO gradient with respect to lambda."""
    g = model.grad_log_g(draw.theta, z) - va.score_theta(draw.theta)
    return va.jacobian_action(draw, g)


def subsampled_gradient(model: LatentVariableModel, va, draw, z, units: np.ndarray) -> np.ndarray:
    """As :func:`hybrid_gradient` with the model gradient estimated on ``units``."""
    g = model.grad_log_g_units(draw.theta, z, units) - va.score_theta(draw.theta)
    return va.jacobian_action(draw, g)


def sample_subset(n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Simple random sample of ``size`` unit indices without replacement, sorted."""
    if not 1 <= size <= n:
        raise ValueError(f"subset size {size} outside [1, {n}]")
    return np.sort(rng.choice(n, size=size, replace=False))


def _plateaued(diag: list, window: int, tol: float) -> bool:
    values = [v for v in diag if v is not None]
    if len(values) < 2 * window:
        return False
    recent = np.mean(values[-window:])
    previous = np.mean(values[-2 * window : -window])
    return abs(recent - previous) <= tol * max(abs(previous), 1e-300)


def run_sga(model: LatentVariableModel, va_init, config: FitConfig, z_init=None):
    """Calibrate ``va_init`` by stochastic gradient ascent.

    Returns the fitted approximation and a :class:`FitTrace`.  The latent
    state is carried from step to step; its final value is stored in
    ``trace.final_latent``.
    """
    rng = np.random.default_rng(config.seed)
    va = va_init
    lam = va.to_lambda()
    if model.dim_theta != va.m:
        raise ValueError(f"model has {model.dim_theta} parameters but the approximation has {va.m}")
    state = AdadeltaState.zeros(lam.size, config.rho_decay, config.epsilon_fuzz)
    trace = FitTrace()
    z = model.init_latent(rng, va.center()) if z_init is None else z_init
    n_units = model.unit_count
    subsample = config.subsample_size is not None and config.subsample_size != n_units
    if subsample and n_units is None:
        raise UnsupportedModelError(f"{type(model).__name__} does not support sub-sampling")
    # diagnostics stride used by the optional plateau rule
    window = None if config.plateau_window is None else max(1, config.plateau_window // config.trace_every)
    avg_start = None if config.average_from is None else int(config.average_from * config.n_steps) + 1
    lam_sum, n_avg = np.zeros_like(lam), 0
    start = time.perf_counter()

    for step in range(1, config.n_steps + 1):
        draw = va.sample_reparam(va.draw_epsilon(rng))
        if subsample:
            units = sample_subset(n_units, config.subsample_size, rng)
            z = model.sample_latent_units(draw.theta, z, units, config.n_sweeps, rng)
            grad = subsampled_gradient(model, va, draw, z, units)
        else:
            z = model.sample_latent(draw.theta, z, config.n_sweeps, rng)
            grad = hybrid_gradient(model, va, draw, z)
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradientError(step)
        clipped = np.abs(grad) > config.clip
        if clipped.any():
            trace.n_clipped += 1
            logger.debug("step %d: clipped %d gradient entries", step, int(clipped.sum()))
            grad = np.clip(grad, -config.clip, config.clip)
        delta, state = adadelta_step(state, grad)
        lam = lam + delta
        if not np.all(np.isfinite(lam)):
            raise NonFiniteGradientError(step, "variational parameter")
        va = va.with_lambda(lam)
        lam = va.to_lambda()
        if avg_start is not None and step >= avg_start:
            lam_sum += lam
            n_avg += 1

        if step % config.trace_every == 0 or step == config.n_steps:
            trace.steps.append(step)
            trace.grad_norm.append(float(np.linalg.norm(grad)))
            trace.diagnostic.append(model.diagnostic(draw.theta, z))
            trace.elapsed_ms.append((time.perf_counter() - start) * 1e3)
            if config.record_lambda:
                trace.lambdas.append(lam.copy())
            if window is not None and _plateaued(trace.diagnostic, window, config.plateau_tol):
                trace.stopped_early = True
                break

    if trace.n_clipped:
        logger.info("gradient clipping triggered on %d steps", trace.n_clipped)
    trace.final_latent = z
    if n_avg:
        va = va.with_lambda(lam_sum / n_avg)
    return va, trace
