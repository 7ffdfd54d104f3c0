"""Readers and writers for datasets, truth files and posterior summaries.

Every tabular artifact is a CSV written with shortest round-trip float
formatting, so a file read back through these readers reproduces the
written arrays exactly.  Metadata lives in JSON sidecars.

Dataset directory layout (``meta.json`` names the model):

* tobit:  ``data.csv`` with columns ``unit, time, y, x_0 .. x_{p-1}``;
  truth in ``truth_theta.csv`` and ``truth_alpha.csv``.
* tvpvar: ``data.csv`` with columns ``time, y_0 .. y_{N-1}``; truth in
  ``truth_h.csv``, ``truth_beta0.csv``, ``truth_B.csv`` and ``truth_L.csv``.
* toy:    ``data.csv`` with columns ``y, a_0 .. a_{m-1}``; truth in
  ``truth_theta.csv`` and ``truth_latent.csv``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd

from .benchmarks import AugmentedGaussianVA
from .families import load_lambda, save_lambda
from .tobit import TobitData, TobitParams
from .tobit.model import theta_names as tobit_theta_names
from .tobit.simulate import TobitTruth
from .toy import ConjugateToy
from .tvpvar import TVPVARData
from .tvpvar.simulate import TVPVARTruth

DATA_FILE = "data.csv"
META_FILE = "meta.json"


def write_csv(frame: pd.DataFrame, path) -> None:
    frame.to_csv(path, index=False, lineterminator="\n")


def read_csv(path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def write_json(obj: dict, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


# -- datasets ----------------------------------------------------------------------


def write_dataset(directory, model: str, data, truth=None, extra_meta: dict | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {"model": model, **(extra_meta or {})}
    if model == "tobit":
        N, T, p = data.X.shape
        unit, time = np.meshgrid(np.arange(N), np.arange(T), indexing="ij")
        frame = pd.DataFrame({"unit": unit.ravel(), "time": time.ravel(), "y": data.y.ravel()})
        for j in range(p):
            frame[f"x_{j}"] = data.X[:, :, j].ravel()
        meta["w_cols"] = list(data.w_cols)
        if truth is not None:
            prm = truth.params
            names = tobit_theta_names(p, prm.r, prm.k_alpha)
            write_csv(pd.DataFrame({"parameter": names, "value": prm.to_vector()}), directory / "truth_theta.csv")
            write_csv(_unit_frame(truth.alpha, "alpha"), directory / "truth_alpha.csv")
            meta["k_alpha"] = prm.k_alpha
    elif model == "tvpvar":
        frame = pd.DataFrame(data.y, columns=[f"y_{j}" for j in range(data.N)])
        frame.insert(0, "time", np.arange(data.T))
        meta["p"] = data.p
        if truth is not None:
            _write_truth_tvpvar(directory, truth)
    elif model == "toy":
        frame = pd.DataFrame(data.A, columns=[f"a_{j}" for j in range(data.A.shape[1])])
        frame.insert(0, "y", data.y)
        meta.update(prior_var=data.prior_var, latent_var=data.latent_var, noise_var=data.noise_var)
        if truth is not None:
            theta, z = truth
            write_csv(pd.DataFrame({"parameter": [f"theta_{j}" for j in range(theta.size)], "value": theta}),
                      directory / "truth_theta.csv")
            write_csv(pd.DataFrame({"unit": np.arange(z.size), "value": z}), directory / "truth_latent.csv")
    else:
        raise ValueError(f"unknown model {model!r}")
    write_csv(frame, directory / DATA_FILE)
    write_json(meta, directory / META_FILE)


def _unit_frame(values: np.ndarray, prefix: str) -> pd.DataFrame:
    frame = pd.DataFrame(values, columns=[f"{prefix}_{j}" for j in range(values.shape[1])])
    frame.insert(0, "unit", np.arange(values.shape[0]))
    return frame


def _long_matrix_frame(arr: np.ndarray, index_names: list[str]) -> pd.DataFrame:
    idx = np.indices(arr.shape).reshape(arr.ndim, -1)
    frame = pd.DataFrame({name: idx[j] for j, name in enumerate(index_names)})
    frame["value"] = arr.ravel()
    return frame


def _from_long(frame: pd.DataFrame, index_names: list[str]) -> np.ndarray:
    shape = tuple(int(frame[name].max()) + 1 for name in index_names)
    out = np.empty(shape)
    out[tuple(frame[name].to_numpy() for name in index_names)] = frame["value"].to_numpy()
    return out


def _write_truth_tvpvar(directory: Path, truth: TVPVARTruth) -> None:
    T, N = truth.h.shape
    h = pd.DataFrame(truth.h, columns=[f"h_{j}" for j in range(N)])
    h.insert(0, "time", np.arange(T))
    write_csv(h, directory / "truth_h.csv")
    b0 = pd.DataFrame(truth.beta0, columns=[f"beta0_{j}" for j in range(N)])
    b0.insert(0, "time", np.arange(T))
    write_csv(b0, directory / "truth_beta0.csv")
    write_csv(_long_matrix_frame(truth.B, ["time", "lag", "row", "col"]), directory / "truth_B.csv")
    write_csv(_long_matrix_frame(truth.L, ["time", "row", "col"]), directory / "truth_L.csv")


def read_dataset(directory):
    """Return ``(model, data)``; ``data`` is a TobitData, TVPVARData or ConjugateToy."""
    directory = Path(directory)
    meta = read_json(directory / META_FILE)
    frame = read_csv(directory / DATA_FILE)
    model = meta["model"]
    if model == "tobit":
        N, T = int(frame["unit"].max()) + 1, int(frame["time"].max()) + 1
        frame = frame.sort_values(["unit", "time"])
        xcols = [c for c in frame.columns if c.startswith("x_")]
        X = frame[xcols].to_numpy().reshape(N, T, len(xcols))
        return model, TobitData(X, frame["y"].to_numpy().reshape(N, T), tuple(meta["w_cols"]))
    if model == "tvpvar":
        ycols = [c for c in frame.columns if c.startswith("y_")]
        return model, TVPVARData(frame.sort_values("time")[ycols].to_numpy(), int(meta["p"]))
    if model == "toy":
        acols = [c for c in frame.columns if c.startswith("a_")]
        toy = ConjugateToy(
            frame[acols].to_numpy(), frame["y"].to_numpy(), meta["prior_var"], meta["latent_var"], meta["noise_var"]
        )
        return model, toy
    raise ValueError(f"unknown model {model!r} in {directory / META_FILE}")


def read_truth(directory):
    """Truth objects as written by :func:`write_dataset`."""
    directory = Path(directory)
    meta = read_json(directory / META_FILE)
    model = meta["model"]
    if model == "tobit":
        theta = read_csv(directory / "truth_theta.csv")["value"].to_numpy()
        alpha = read_csv(directory / "truth_alpha.csv").drop(columns="unit").to_numpy()
        _, data = read_dataset(directory)
        params = TobitParams.from_vector(theta, data.p, data.r, int(meta["k_alpha"]))
        return TobitTruth(params, alpha, None)
    if model == "tvpvar":
        h = read_csv(directory / "truth_h.csv").drop(columns="time").to_numpy()
        beta0 = read_csv(directory / "truth_beta0.csv").drop(columns="time").to_numpy()
        B = _from_long(read_csv(directory / "truth_B.csv"), ["time", "lag", "row", "col"])
        L = _from_long(read_csv(directory / "truth_L.csv"), ["time", "row", "col"])
        return TVPVARTruth(beta0, B, L, h)
    if model == "toy":
        theta = read_csv(directory / "truth_theta.csv")["value"].to_numpy()
        z = read_csv(directory / "truth_latent.csv")["value"].to_numpy()
        return theta, z
    raise ValueError(f"unknown model {model!r}")


# -- variational parameters -----------------------------------------------------------


def save_va(path, va) -> None:
    """``save_lambda`` for the parametric families; a shape sidecar for the augmented benchmark."""
    path = Path(path)
    if isinstance(va, AugmentedGaussianVA):
        np.save(path.with_suffix(".npy"), va.to_lambda())
        meta = {
            "family": "augmented",
            "head_dim": va.head.m,
            "head_k": va.head.k,
            "n_units": va.n_units,
            "unit_dim": va.unit_dim,
            "unit_k": va.unit_k,
        }
        write_json(meta, path.with_suffix(".json"))
    else:
        save_lambda(path, va)


def load_va(path):
    path = Path(path)
    meta = read_json(path.with_suffix(".json"))
    if meta["family"] != "augmented":
        return load_lambda(path)
    va = AugmentedGaussianVA.initial(
        meta["head_dim"], meta["head_k"], meta["n_units"], meta["unit_dim"], meta["unit_k"]
    )
    return va.with_lambda(np.load(path.with_suffix(".npy")))


# -- summaries ------------------------------------------------------------------------

QUANTILES = (0.05, 0.5, 0.95)


def theta_summary_frame(names, draws: np.ndarray) -> pd.DataFrame:
    """Mean, SD and 5/50/95% quantiles of every column of ``draws``."""
    q = np.quantile(draws, QUANTILES, axis=0)
    return pd.DataFrame(
        {
            "parameter": list(names),
            "mean": draws.mean(axis=0),
            "sd": draws.std(axis=0, ddof=1),
            "q05": q[0],
            "q50": q[1],
            "q95": q[2],
        }
    )


def matrix_summary_frame(draws: np.ndarray) -> pd.DataFrame:
    """Entrywise mean, SD and 5/95% quantiles of ``(n_draws, r, r)`` matrix draws."""
    r = draws.shape[1]
    rows, cols = np.indices((r, r)).reshape(2, -1)
    flat = draws.reshape(draws.shape[0], -1)
    q = np.quantile(flat, (0.05, 0.95), axis=0)
    return pd.DataFrame(
        {"row": rows, "col": cols, "mean": flat.mean(0), "sd": flat.std(0, ddof=1), "q05": q[0], "q95": q[1]}
    )


def alpha_summary_frame(mean: np.ndarray, sd: np.ndarray) -> pd.DataFrame:
    N, r = mean.shape
    unit, effect = np.indices((N, r)).reshape(2, -1)
    return pd.DataFrame({"unit": unit, "effect": effect, "mean": mean.ravel(), "sd": sd.ravel()})


def alpha_from_frame(frame: pd.DataFrame, column: str = "mean") -> np.ndarray:
    return _from_long(frame.rename(columns={column: "value"}), ["unit", "effect"])
