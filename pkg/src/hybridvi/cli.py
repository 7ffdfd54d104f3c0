"""Command-line entry points: simulate, fit, mcmc, compare, gradcheck.

Every command takes ``--config`` (a YAML path or the name of a packaged
config) and ``--set key=value`` overrides; all randomness derives from the
config seed.  Timings go to ``timing.csv`` so that every other artifact is
reproducible bit for bit.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from . import io
from .config import RunConfig, load_config, packaged_configs
from .diagnostics import grad_check, standardized_mean_error, standardized_moment_error
from .families import GaussianFactorVA
from .posterior import hybrid_latent_moments
from .sga import run_sga
from .tobit import (
    TobitData,
    TobitModel,
    TobitParams,
    TobitSummary,
    augmented_tobit_summary,
    fit_augmented_tobit,
    fit_hybrid_tobit,
    heterogeneity,
    hybrid_tobit_summary,
    mcmc_tobit,
    rmse_metric,
    simulate_tobit,
)
from .tobit import model as tobit_model
from .tobit.simulate import default_true_params
from .toy import ConjugateToy
from .tvpvar import (

    TVPVARLatent,
    TVPVARParams,
    build_design,
    canonical_sign,
    mcmc_equation,
    predictive_kl,
    recover_paths,
    simulate_tvpvar,
    theta_names,
)
from .tvpvar import model as tvpvar_model
from .tvpvar.fit import (
    PathSummary,
    augmented_path_summary,
    fit_augmented_equation,
    fit_hybrid_equation,
    hybrid_path_summary,
)

logger = logging.getLogger("hybridvi")

COMMANDS = ("simulate", "fit", "mcmc", "compare", "gradcheck")


class CommandError(RuntimeError):
    """A command could not run with the given configuration."""


def _rng(config: RunConfig, stream: int) -> np.random.Generator:
    """Independent generator per purpose, all derived from the config seed."""
    return np.random.default_rng([config.seed, stream])


def _write_meta(out: Path, command: str, config: RunConfig, **extra) -> None:
    meta = {"command": command, "version": __version__, "config": config.model_dump(mode="json"), **extra}
    io.write_json(meta, out / "meta.json")


# -- data --------------------------------------------------------------------------


def _simulate(config: RunConfig):
    rng = _rng(config, 0)
    if config.model == "tobit":
        sim = config.data.tobit
        params = default_true_params(sim.p, sim.r, sim.k_alpha)
        if sim.intercept is not None:
            params = TobitParams(np.r_[sim.intercept, params.beta[1:]], params.xi, params.c, params.kappa, params.l)
        return simulate_tobit(sim.N, sim.T, sim.p, sim.r, sim.k_alpha, params, rng)
    if config.model == "tvpvar":
        sim = config.data.tvpvar
        return simulate_tvpvar(sim.N, sim.T, sim.p, rng, sim.spec())
    sim = config.data.toy
    toy, theta, z = ConjugateToy.simulate_with_truth(
        sim.n, sim.m, rng, prior_var=sim.prior_var, latent_var=sim.latent_var, noise_var=sim.noise_var
    )
    return toy, (theta, z)


def _load_data(config: RunConfig):
    if config.data.path is None:
        return _simulate(config)[0]
    model, data = io.read_dataset(config.data.path)
    if model != config.model:
        raise CommandError(f"dataset at {config.data.path} holds a {model} model, config says {config.model}")
    return data


def cmd_simulate(config: RunConfig) -> Path:
    out = Path(config.output_dir)
    data, truth = _simulate(config)
    extra = {}
    if config.model == "tobit":
        extra["censored_fraction"] = float(data.censored.mean())
        print(f"censored fraction: {extra['censored_fraction']:.6f}")
    io.write_dataset(out, config.model, data, truth, extra)
    return out


# -- fit ---------------------------------------------------------------------------


def _write_trace(out: Path, trace, suffix: str = "") -> None:
    frame = trace.to_frame()
    io.write_csv(frame.drop(columns="elapsed_ms"), out / f"trace{suffix}.csv")
    io.write_csv(frame[["step", "elapsed_ms"]], out / f"timing{suffix}.csv")


def _write_tobit_summary(out: Path, data: TobitData, summary: TobitSummary, config: RunConfig) -> None:
    io.write_csv(io.theta_summary_frame(summary.names, summary.theta_draws), out / "theta_summary.csv")
    io.write_csv(io.alpha_summary_frame(summary.alpha_mean, summary.alpha_sd), out / "alpha_summary.csv")
    V = summary.v_alpha_draws()
    io.write_csv(io.matrix_summary_frame(V), out / "v_alpha_summary.csv")
    if data.r > 1:
        io.write_csv(heterogeneity(data, V, config.compare.focal, config.compare.cross), out / "heterogeneity.csv")
    np.save(out / "theta_draws.npy", summary.theta_draws)


def _write_tvpvar_summary(out: Path, i: int, q: int, summary: PathSummary, theta_draws: np.ndarray) -> None:
    io.write_csv(io.theta_summary_frame(theta_names(q), theta_draws), out / f"theta_summary_eq{i}.csv")
    frame = pd.DataFrame({"time": np.arange(summary.h_mean.size), "h_mean": summary.h_mean, "vol_mean": summary.vol_mean})
    for j in range(q):
        frame[f"eta_tilde_{j}"] = summary.eta_tilde_mean[:, j]
    for j in range(q):
        frame[f"coef_{j}"] = summary.coef_mean[:, j]
    io.write_csv(frame, out / f"paths_eq{i}.csv")
    # the canonical mean, which need not equal the column means of theta_summary quantiles
    io.write_csv(pd.DataFrame({"parameter": theta_names(q), "value": summary.theta_mean}), out / f"theta_mean_eq{i}.csv")


def _write_recovered_paths(out: Path, data, coef_paths: list) -> None:
    beta0, B, L = recover_paths(coef_paths, data.N, data.p)
    T_eff = beta0.shape[0]
    time = np.arange(data.p, data.p + T_eff)
    frames = [pd.DataFrame({"time": time, "kind": "beta0", "lag": 0, "row": j, "col": -1, "value": beta0[:, j]})
              for j in range(data.N)]
    for s in range(data.p):
        for a in range(data.N):
            for b in range(data.N):
                frames.append(pd.DataFrame({"time": time, "kind": "B", "lag": s + 1, "row": a, "col": b,
                                            "value": B[:, s, a, b]}))
    for a in range(data.N):
        for b in range(a):
            frames.append(pd.DataFrame({"time": time, "kind": "L", "lag": 0, "row": a, "col": b, "value": L[:, a, b]}))
    io.write_csv(pd.concat(frames, ignore_index=True), out / "coefficient_paths.csv")


def _tvpvar_theta_draws(va, n: int, q: int, rng) -> np.ndarray:
    draws = va.sample(rng, n)[:, : 6 * q + 5]
    return np.array([canonical_sign(t, np.zeros((1, q)), q)[0] for t in draws])


def cmd_fit(config: RunConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = _load_data(config)
    fit_cfg = config.fit.to_fit_config(config.seed)
    va_cfg = config.va
    rng = _rng(config, 2)
    if config.model == "tobit":
        if va_cfg.method == "hybrid":
            va, trace = fit_hybrid_tobit(data, fit_cfg, va_cfg.k, va_cfg.family, va_cfg.k_alpha)
            summary = hybrid_tobit_summary(data, va, trace.final_latent, va_cfg.summary_draws,
                                           va_cfg.summary_sweeps, rng, va_cfg.k_alpha)
        else:
            va, trace = fit_augmented_tobit(data, fit_cfg, va_cfg.k, va_cfg.unit_k, va_cfg.k_alpha)
            summary = augmented_tobit_summary(data, va, va_cfg.summary_draws, rng, va_cfg.k_alpha)
        io.save_va(out / "lambda", va)
        _write_trace(out, trace)
        _write_tobit_summary(out, data, summary, config)
    elif config.model == "tvpvar":
        coef_paths = []
        for i in range(data.N):
            design = build_design(data, i)
            cfg_i = replace(fit_cfg, seed=int(_rng(config, 100 + i).integers(2**31)))
            if va_cfg.method == "hybrid":
                va, trace = fit_hybrid_equation(design, cfg_i, va_cfg.k, va_cfg.family)
                summary = hybrid_path_summary(design, va, trace.final_latent, va_cfg.summary_draws,
                                              va_cfg.summary_sweeps, rng)
            else:
                va, trace = fit_augmented_equation(design, cfg_i, va_cfg.k, va_cfg.unit_k)
                summary = augmented_path_summary(design, va, va_cfg.summary_draws, rng)
            io.save_va(out / f"lambda_eq{i}", va)
            _write_trace(out, trace, f"_eq{i}")
            draws = _tvpvar_theta_draws(va, va_cfg.summary_draws, design.q, rng)
            _write_tvpvar_summary(out, i, design.q, summary, draws)
            coef_paths.append(summary.coef_mean)
        _write_recovered_paths(out, data, coef_paths)
    else:
        if va_cfg.method != "hybrid":
            raise CommandError("the toy model supports only the hybrid method")
        va, trace = run_sga(data, GaussianFactorVA.initial(data.dim_theta, va_cfg.k), fit_cfg)
        mean, sd = hybrid_latent_moments(data, va, trace.final_latent, va_cfg.summary_draws, va_cfg.summary_sweeps, rng)
        io.save_va(out / "lambda", va)
        _write_trace(out, trace)
        io.write_csv(io.theta_summary_frame([f"theta_{j}" for j in range(data.dim_theta)],
                                            va.sample(rng, va_cfg.summary_draws)), out / "theta_summary.csv")
        io.write_csv(pd.DataFrame({"unit": np.arange(mean.size), "mean": mean, "sd": sd}), out / "latent_summary.csv")
    _write_meta(out, "fit", config, kind="fit", method=va_cfg.method)
    return out


# -- mcmc --------------------------------------------------------------------------


def cmd_mcmc(config: RunConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = _load_data(config)
    rng = _rng(config, 3)
    if config.model == "tobit":
        chain = mcmc_tobit(data, config.mcmc.tobit_config(), rng, config.va.k_alpha)
        io.write_csv(pd.DataFrame(chain.theta_draws, columns=chain.names), out / "chain.csv")
        io.write_csv(chain.acceptance_frame(), out / "acceptance.csv")
        io.write_csv(chain.ess(), out / "ess.csv")
        _write_tobit_summary(out, data, TobitSummary.from_chain(chain), config)
    elif config.model == "tvpvar":
        coef_paths = []
        for i in range(data.N):
            design = build_design(data, i)
            chain = mcmc_equation(design, config.mcmc.tvpvar_config(), rng)
            io.write_csv(pd.DataFrame(chain.theta_draws, columns=chain.names), out / f"chain_eq{i}.csv")
            io.write_csv(chain.acceptance_frame(), out / f"acceptance_eq{i}.csv")
            io.write_csv(chain.ess(), out / f"ess_eq{i}.csv")
            _write_tvpvar_summary(out, i, design.q, PathSummary.from_chain(chain), chain.theta_draws)
            coef_paths.append(chain.coef_mean)
        _write_recovered_paths(out, data, coef_paths)
    else:
        # conjugate model: exact independent posterior draws stand in for a chain
        cov = data.posterior_cov()
        draws = rng.multivariate_normal(data.posterior_mean(), cov, size=config.mcmc.max_draws)
        names = [f"theta_{j}" for j in range(data.dim_theta)]
        io.write_csv(pd.DataFrame(draws, columns=names), out / "chain.csv")
        io.write_csv(io.theta_summary_frame(names, draws), out / "theta_summary.csv")
    _write_meta(out, "mcmc", config, kind="chain")
    return out


# -- compare -----------------------------------------------------------------------


def _theta_comparison(approx: pd.DataFrame, ref: pd.DataFrame) -> tuple[pd.DataFrame, float]:
    frame = pd.DataFrame(
        {
            "parameter": ref["parameter"],
            "mean_approx": approx["mean"].to_numpy(),
            "sd_approx": approx["sd"].to_numpy(),
            "mean_reference": ref["mean"].to_numpy(),
            "sd_reference": ref["sd"].to_numpy(),
        }
    )
    err = standardized_moment_error(frame.mean_approx, frame.sd_approx, frame.mean_reference, frame.sd_reference)
    return frame, err


def cmd_compare(config: RunConfig) -> dict:
    if config.compare.approx is None or config.compare.reference is None:
        raise CommandError("compare needs compare.approx and compare.reference directories")
    a_dir, r_dir = Path(config.compare.approx), Path(config.compare.reference)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = _load_data(config)
    metrics: dict = {}
    if config.model in ("tobit", "toy"):
        a_theta, r_theta = io.read_csv(a_dir / "theta_summary.csv"), io.read_csv(r_dir / "theta_summary.csv")
        frame, metrics["theta_moment_error"] = _theta_comparison(a_theta, r_theta)
        io.write_csv(frame, out / "theta_comparison.csv")
    if config.model == "tobit":
        a_alpha = io.alpha_from_frame(io.read_csv(a_dir / "alpha_summary.csv"))
        r_alpha = io.alpha_from_frame(io.read_csv(r_dir / "alpha_summary.csv"))
        alpha = io.read_csv(a_dir / "alpha_summary.csv").rename(columns={"mean": "mean_approx", "sd": "sd_approx"})
        alpha["mean_reference"] = r_alpha.ravel()
        io.write_csv(alpha, out / "alpha_comparison.csv")
        metrics["alpha_rmse"] = float(np.sqrt(np.mean((a_alpha - r_alpha) ** 2)))
        a_v, r_v = io.read_csv(a_dir / "v_alpha_summary.csv"), io.read_csv(r_dir / "v_alpha_summary.csv")
        metrics["v_alpha_error"] = standardized_mean_error(a_v["mean"], r_v["mean"], r_v["sd"])
        k_alpha = config.va.k_alpha
        for name, d, th in (("approx", a_alpha, a_theta), ("reference", r_alpha, r_theta)):
            params = TobitParams.from_vector(th["mean"].to_numpy(), data.p, data.r, k_alpha)
            metrics[f"rmse_metric_{name}"] = rmse_metric(data, d, params)
        if (a_dir / "heterogeneity.csv").exists() and (r_dir / "heterogeneity.csv").exists():
            a_h, r_h = io.read_csv(a_dir / "heterogeneity.csv"), io.read_csv(r_dir / "heterogeneity.csv")
            het = a_h.rename(columns=lambda c: c if c == "measure" else f"{c}_approx")
            for c in ("mean", "lower", "upper"):
                het[f"{c}_reference"] = r_h[c].to_numpy()
            io.write_csv(het, out / "heterogeneity_comparison.csv")
    elif config.model == "tvpvar":
        for i in range(data.N):
            design = build_design(data, i)
            q = design.q
            a_theta, r_theta = (io.read_csv(d / f"theta_summary_eq{i}.csv") for d in (a_dir, r_dir))
            frame, metrics[f"theta_moment_error_eq{i}"] = _theta_comparison(a_theta, r_theta)
            io.write_csv(frame, out / f"theta_comparison_eq{i}.csv")
            paths, params = [], []
            for d in (a_dir, r_dir):
                p = io.read_csv(d / f"paths_eq{i}.csv")
                theta = io.read_csv(d / f"theta_mean_eq{i}.csv")["value"].to_numpy()
                paths.append(p)
                latent = TVPVARLatent(p["h_mean"].to_numpy(), p[[f"eta_tilde_{j}" for j in range(q)]].to_numpy())
                params.append((TVPVARParams.from_vector(theta, 2 * q), latent))
            overlay = pd.DataFrame({"time": paths[0]["time"], "vol_approx": paths[0]["vol_mean"],
                                    "vol_reference": paths[1]["vol_mean"]})
            io.write_csv(overlay, out / f"volatility_eq{i}.csv")
            metrics[f"vol_corr_eq{i}"] = float(np.corrcoef(overlay.vol_approx, overlay.vol_reference)[0, 1])
            metrics[f"predictive_kl_eq{i}"] = predictive_kl(design, *params[0], *params[1], n_grid=config.compare.kl_grid)
    io.write_json(metrics, out / "metrics.json")
    return metrics


# -- gradcheck ---------------------------------------------------------------------


def _gradcheck_frame(report, names, point: int) -> pd.DataFrame:
    frame = report.to_frame()
    frame.insert(0, "parameter", list(names))
    frame.insert(0, "point", point)
    return frame


def cmd_gradcheck(config: RunConfig) -> bool:
    """Finite-difference checks of both models' ``grad_theta log g``; returns overall pass."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    gc = config.gradcheck
    rng = _rng(config, 4)
    summary = {}

    sim = gc.tobit
    frames = []
    for point in range(gc.n_points):
        data, truth = simulate_tobit(sim.N, sim.T, sim.p, sim.r, sim.k_alpha, None, rng)
        model = TobitModel(data, sim.k_alpha)
        theta = truth.params.to_vector() + 0.3 * rng.standard_normal(model.dim_theta)
        z = model.init_latent(rng, theta)
        z.alpha = rng.standard_normal(z.alpha.shape)

        def f(t):
            return tobit_model.log_g_tobit(data, model.params(t), z)

        def g(t):
            return tobit_model.grad_log_g_tobit(data, model.params(t), z)

        frames.append(_gradcheck_frame(grad_check(f, g, theta, tol=gc.tol), model.names, point))
    tobit_frame = pd.concat(frames, ignore_index=True)
    io.write_csv(tobit_frame, out / "gradcheck_tobit.csv")

    sim = gc.tvpvar
    frames = []
    for point in range(gc.n_points):
        data, _ = simulate_tvpvar(sim.N, sim.T, sim.p, rng, sim.spec())
        for i in range(data.N):
            design = build_design(data, i)
            theta = tvpvar_model.initial_theta(design) + 0.3 * rng.standard_normal(design.dim_theta)
            latent = TVPVARLatent(rng.standard_normal(design.T) - 1.0, rng.standard_normal((design.T, design.q)))

            def f(t):
                return tvpvar_model.log_g_tvpvar(design, TVPVARParams.from_vector(t, design.J), latent)

            def g(t):
                return tvpvar_model.grad_log_g_tvpvar(design, TVPVARParams.from_vector(t, design.J), latent)

            frame = _gradcheck_frame(grad_check(f, g, theta, tol=gc.tol), theta_names(design.q), point)
            frame.insert(1, "equation", i)
            frames.append(frame)
    tvp_frame = pd.concat(frames, ignore_index=True)
    io.write_csv(tvp_frame, out / "gradcheck_tvpvar.csv")

    for name, frame in (("tobit", tobit_frame), ("tvpvar", tvp_frame)):
        summary[name] = {
            "checked": int(len(frame)),
            "failed": int(frame["flagged"].sum()),
            "max_rel_error": float(frame["rel_error"].max()),
        }
    passed = all(s["failed"] == 0 for s in summary.values())
    summary["passed"] = passed
    io.write_json(summary, out / "gradcheck_summary.json")
    return passed


# -- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybridvi", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help=f"YAML file or packaged config ({', '.join(packaged_configs())})")
        cmd.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                         help="override a config key, e.g. fit.n_steps=500 (repeatable)")
        cmd.add_argument("--seed", type=int, help="shorthand for --set seed=...")
        cmd.add_argument("--output-dir", help="shorthand for --set output_dir=...")
        cmd.add_argument("--data", help="shorthand for --set data.path=...")
        cmd.add_argument("-v", "--verbose", action="store_true")
        if name == "fit":
            cmd.add_argument("--sweeps", type=int, help="shorthand for --set fit.n_sweeps=...")
            cmd.add_argument("--steps", type=int, help="shorthand for --set fit.n_steps=...")
        if name == "compare":
            cmd.add_argument("--approx", help="shorthand for --set compare.approx=...")
            cmd.add_argument("--reference", help="shorthand for --set compare.reference=...")
    return parser


SHORTHANDS = {
    "seed": "seed",
    "output_dir": "output_dir",
    "data": "data.path",
    "sweeps": "fit.n_sweeps",
    "steps": "fit.n_steps",
    "approx": "compare.approx",
    "reference": "compare.reference",
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = list(args.overrides)
    for attr, key in SHORTHANDS.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides.append(f"{key}={value}")
    try:
        config = load_config(args.config, overrides)
    except (ValueError, FileNotFoundError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "simulate":
            cmd_simulate(config)
        elif args.command == "fit":
            cmd_fit(config)
        elif args.command == "mcmc":
            cmd_mcmc(config)
        elif args.command == "compare":
            metrics = cmd_compare(config)
            for key, value in metrics.items():
                print(f"{key}: {value:.6g}")
        else:
            passed = cmd_gradcheck(config)
            print("gradient check", "passed" if passed else "FAILED")
            return 0 if passed else 1
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
