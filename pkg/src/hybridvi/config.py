"""Run configuration: one YAML file per run, validated before any computation."""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .sga import FitConfig
from .tobit import TobitMCMCConfig
from .tvpvar import TVPVARMCMCConfig, TVPVARSimSpec


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class TobitSimulation(Section):
    N: int = Field(200, ge=1)
    T: int = Field(25, ge=1)
    p: int = Field(4, ge=1)
    r: int = Field(2, ge=1)
    k_alpha: int = Field(1, ge=0)
    intercept: float | None = None

    @model_validator(mode="after")
    def _check_shapes(self):
        if self.r > self.p or self.k_alpha > self.r:
            raise ValueError("need k_alpha <= r <= p")
        return self


class TVPVARSimulation(Section):
    N: int = Field(2, ge=1)
    T: int = Field(151, ge=3)
    p: int = Field(1, ge=1)
    intercept: float = 0.1
    own_lag: float = 0.5
    cross_lag: float = 0.1
    impact: float = 0.3
    coef_innov_sd: float = Field(0.01, ge=0)
    impact_innov_sd: float = Field(0.01, ge=0)
    hbar: float = -1.0
    rho: float = Field(0.95, gt=-1, lt=1)
    sigma2: float = Field(0.1, ge=0)

    def spec(self) -> TVPVARSimSpec:
        fields = self.model_dump(exclude={"N", "T", "p"})
        return TVPVARSimSpec(**fields)


class ToySimulation(Section):
    n: int = Field(50, ge=1)
    m: int = Field(3, ge=1)
    prior_var: float = Field(4.0, gt=0)
    latent_var: float = Field(0.5, gt=0)
    noise_var: float = Field(0.25, gt=0)


class DataSection(Section):
    """Either a directory written by ``simulate`` (``path``) or a simulation spec."""

    path: str | None = None
    tobit: TobitSimulation = TobitSimulation()
    tvpvar: TVPVARSimulation = TVPVARSimulation()
    toy: ToySimulation = ToySimulation()


class VASection(Section):
    method: Literal["hybrid", "augmented"] = "hybrid"
    family: Literal["gaussian", "copula"] = "gaussian"
    k: int = Field(3, ge=0)
    unit_k: int = Field(0, ge=0)
    k_alpha: int = Field(1, ge=0)
    summary_draws: int = Field(2000, ge=2)
    summary_sweeps: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check_family(self):
        if self.method == "augmented" and self.family != "gaussian":
            raise ValueError("the augmented benchmark uses the Gaussian family")
        return self


class FitSection(Section):
    n_steps: int = Field(1000, ge=0)
    n_sweeps: int = Field(5, ge=1)
    subsample_size: int | None = Field(None, ge=1)
    trace_every: int = Field(100, ge=1)
    rho_decay: float = Field(0.95, gt=0, lt=1)
    epsilon_fuzz: float = Field(1e-6, gt=0)
    clip: float = Field(1e4, gt=0)
    average_from: float | None = Field(None, ge=0, lt=1)

    def to_fit_config(self, seed: int) -> FitConfig:
        return FitConfig(seed=seed, record_lambda=False, **self.model_dump())


class MCMCSection(Section):
    n_sweeps: int = Field(2000, ge=0)
    burn_in: float = Field(0.5, ge=0, lt=1)
    max_draws: int = Field(5000, ge=1)

    def tobit_config(self) -> TobitMCMCConfig:
        return TobitMCMCConfig(**self.model_dump())

    def tvpvar_config(self) -> TVPVARMCMCConfig:
        return TVPVARMCMCConfig(**self.model_dump())


class CompareSection(Section):
    approx: str | None = None
    reference: str | None = None
    focal: list[int] = [0]
    cross: list[int] = [1]
    kl_grid: int = Field(2001, ge=101)


class GradcheckSection(Section):
    n_points: int = Field(10, ge=1)
    tol: float = Field(1e-4, gt=0)
    tobit: TobitSimulation = TobitSimulation(N=5, T=4, p=3, r=2, k_alpha=1)
    tvpvar: TVPVARSimulation = TVPVARSimulation(N=2, T=13, p=1)


class RunConfig(Section):
    model: Literal["tobit", "tvpvar", "toy"]
    seed: int = 0
    output_dir: str = "out"
    data: DataSection = DataSection()
    va: VASection = VASection()
    fit: FitSection = FitSection()
    mcmc: MCMCSection = MCMCSection()
    compare: CompareSection = CompareSection()
    gradcheck: GradcheckSection = GradcheckSection()


def packaged_configs() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("hybridvi.configs").iterdir() if p.name.endswith(".yaml"))


def _read_yaml(source: str) -> dict:
    path = Path(source)
    if path.is_file():
        text = path.read_text()
    elif source in packaged_configs():
        text = resources.files("hybridvi.configs").joinpath(f"{source}.yaml").read_text()
    else:
        raise FileNotFoundError(f"no config file {source!r}; packaged configs: {packaged_configs()}")
    raw = yaml.safe_load(text) or {}
    if not isinstance(raw, dict):
        raise ValueError("config must be a mapping")
    return raw


def apply_override(raw: dict, assignment: str) -> dict:
    """Apply one ``dotted.key=value`` override; ``value`` is parsed as YAML."""
    key, sep, value = assignment.partition("=")
    if not sep or not key:
        raise ValueError(f"override {assignment!r} is not of the form key=value")
    node = raw
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ValueError(f"override {assignment!r} descends into a non-mapping")
    node[parts[-1]] = yaml.safe_load(value)
    return raw


def load_config(source: str, overrides: list[str] = ()) -> RunConfig:
    """Read a YAML file (or a packaged config by name), apply overrides and validate."""
    raw = _read_yaml(source)
    for assignment in overrides:
        apply_override(raw, assignment)
    return RunConfig.model_validate(raw)
