"""Feedforward forecaster with a linear bottleneck codec.

``history (p x W) -> trunk -> full forecast (pH) -> E -> phi (Z) -> D -> s_hat (pH)``.

The trunk is a ReLU MLP (two hidden layers of width 64 by default). The
encoder side (trunk + ``E``) runs at the data owner, ``D`` at the controller,
so ``phi`` is the only thing that crosses the network. Inputs and outputs live
in scaled space; :meth:`ForecastModel.forecaster` wraps the model for physical
units.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DimensionError, ParseError
from .timeseries import ScaleParams, flatten, unflatten

MODES = ("task-agnostic", "task-aware", "weighted")
INPUTS = ("history", "future")
CHECKPOINT_VERSION = 1


@dataclass
class ForecastModel:
    p: int
    W: int
    H: int
    Z: int
    hidden: tuple = (64, 64)
    mode: str = "task-agnostic"
    lambda_f: float = 0.0
    encoder_input: str = "history"
    params: dict = field(default=None, repr=False)
    scale: ScaleParams = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.encoder_input not in INPUTS:
            raise ConfigError(f"unknown encoder input {self.encoder_input!r}")
        if not 1 <= self.Z <= self.p * self.H:
            raise ConfigError(f"Z={self.Z} must lie in 1..pH={self.p * self.H}")
        if self.mode == "weighted" and not self.lambda_f > 0:
            raise ConfigError("weighted mode needs lambda_f > 0")
        if self.mode == "task-aware" and self.lambda_f != 0:
            raise ConfigError("task-aware mode fixes lambda_f = 0")
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.scale is None:
            self.scale = ScaleParams.identity(self.p)

    @property
    def in_dim(self):
        return self.p * (self.W if self.encoder_input == "history" else self.H)

    @property
    def out_dim(self):
        return self.p * self.H

    def layer_names(self):
        return [f"W{i}" for i in range(len(self.hidden) + 1)]

    def parameter_count(self):
        return sum(v.size for v in self.params.values())

    def copy(self):
        m = ForecastModel(self.p, self.W, self.H, self.Z, self.hidden, self.mode, self.lambda_f,
                          self.encoder_input, {k: v.copy() for k, v in self.params.items()}, self.scale)
        return m


def init_model(p, W, H, Z, hidden=(64, 64), mode="task-agnostic", lambda_f=0.0, encoder_input="history",
               seed=0, scale=None):
    """Weights and biases uniform in +-1/sqrt(fan_in), drawn from ``seed``."""
    model = ForecastModel(p, W, H, Z, hidden, mode, lambda_f, encoder_input, None, scale)
    rng = np.random.default_rng(seed)
    sizes = [model.in_dim, *model.hidden, model.out_dim]
    params = {}
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = 1.0 / np.sqrt(a)
        params[f"W{i}"] = rng.uniform(-bound, bound, (b, a))
        params[f"b{i}"] = rng.uniform(-bound, bound, b)
    pH = model.out_dim
    params["E"] = rng.uniform(-1 / np.sqrt(pH), 1 / np.sqrt(pH), (Z, pH))
    params["D"] = rng.uniform(-1 / np.sqrt(Z), 1 / np.sqrt(Z), (pH, Z))
    model.params = params
    return model


def trunk(model, X, params=None):
    """Full forecast for a batch of flattened inputs ``X`` (in_dim x B).

    ``params`` may hold tape variables, in which case the result is a tape node.
    """
    P = model.params if params is None else params
    h = X
    depth = len(model.hidden)
    for i in range(depth + 1):
        h = P[f"W{i}"] @ h + P[f"b{i}"].reshape(-1, 1)
        if i < depth:
            h = ad.relu(h)
    return h


def forward(model, X, params=None):
    """Returns (phi, s_hat) for a batch of flattened scaled inputs (columns)."""
    P = model.params if params is None else params
    phi = P["E"] @ trunk(model, X, P)
    return phi, P["D"] @ phi


def _input_vector(model, block):
    block = np.asarray(block, float)
    width = model.W if model.encoder_input == "history" else model.H
    if block.shape != (model.p, width):
        raise DimensionError(f"expected a ({model.p}, {width}) window, got {block.shape}")
    return flatten(block)


def encode(model, history):
    """phi (Z,) for one scaled ``p x W`` window (or ``p x H`` for future-input models)."""
    x = _input_vector(model, history)
    phi = model.params["E"] @ trunk(model, x[:, None])
    return phi[:, 0]


def decode(model, phi):
    phi = np.asarray(phi, float)
    if phi.shape != (model.Z,):
        raise DimensionError(f"phi must have shape ({model.Z},), got {phi.shape}")
    return unflatten(model.params["D"] @ phi, model.p)


def forecaster(model):
    """Adapter for :func:`codesign.mpc.rollout`: physical windows in, physical forecast out."""
    sc = model.scale

    def f(hist, fut, t):
        src = hist if model.encoder_input == "history" else fut
        s_hat = decode(model, encode(model, sc.apply(src, axis=0)))
        return sc.invert(s_hat, axis=0)

    return f


def forecast_mse(s_hat_seq, s_true_seq):
    """Enacted-step MSE and the per-(dimension, horizon offset) error matrix.

    Both inputs are (T, p, H). The scalar is (1/T) sum_t |s_t - s_hat_t|^2 over
    the first column of each forecast; the matrix averages squared errors over t.
    """
    s_hat_seq = np.asarray(s_hat_seq, float)
    s_true_seq = np.asarray(s_true_seq, float)
    if s_hat_seq.shape != s_true_seq.shape:
        raise DimensionError("forecast and truth must have equal shapes")
    err = (s_hat_seq - s_true_seq) ** 2
    return float(err[:, :, 0].sum(axis=1).mean()), err.mean(axis=0)


# ---------------------------------------------------------------- checkpoints

def save_model(model, path):
    """``.npz`` file: a JSON header (format version, dims, mode, scaling) plus
    one array per named parameter."""
    header = {
        "format": "codesign-forecaster", "version": CHECKPOINT_VERSION,
        "p": model.p, "W": model.W, "H": model.H, "Z": model.Z, "hidden": list(model.hidden),
        "mode": model.mode, "lambda_f": model.lambda_f, "encoder_input": model.encoder_input,
        "scale": model.scale.to_dict(), "params": sorted(model.params),
    }
    arrays = {f"param/{k}": v for k, v in model.params.items()}
    buf = io.BytesIO()
    np.savez(buf, header=np.array(json.dumps(header)), **arrays)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_model(path):
    with np.load(path, allow_pickle=False) as z:
        if "header" not in z:
            raise ParseError(f"{path}: missing checkpoint header")
        header = json.loads(str(z["header"]))
        if header.get("format") != "codesign-forecaster":
            raise ParseError(f"{path}: not a forecaster checkpoint")
        if header["version"] != CHECKPOINT_VERSION:
            raise ParseError(f"{path}: unsupported checkpoint version {header['version']}")
        params = {k: z[f"param/{k}"].copy() for k in header["params"]}
    return ForecastModel(header["p"], header["W"], header["H"], header["Z"], tuple(header["hidden"]),
                         header["mode"], header["lambda_f"], header["encoder_input"], params,
                         ScaleParams.from_dict(header["scale"]))
