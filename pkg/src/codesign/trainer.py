"""Rollout-based training of the forecaster against a fixed MPC controller."""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .diffmpc import DiffRollout, loss_surrogate, loss_total, mpc_rollout_op, perfect_cost
from .errors import ConfigError, DimensionError, DivergenceError
from .forecaster import forward, save_model
from .timeseries import fit_scale, flatten, rollout_windows

LOSS_KINDS = ("total", "surrogate")


@dataclass
class TrainConfig:
    lambda_f: float = 0.0
    Z: int = 4
    epochs: int = 100
    lr: float = 1e-3
    seed: int = 0
    loss_kind: str = "total"
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = None  # None: full batch (one step per epoch)
    grad_clip: float = 100.0
    unroll: bool = False
    x0: str = "setpoint"  # or "zero"
    workers: int = 1
    deterministic: bool = True
    checkpoint_every: int = 0
    checkpoint_dir: str = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not self.lr >= 0:
            raise ConfigError("learning rate must be >= 0")
        if self.lambda_f < 0:
            raise ConfigError("lambda_f must be >= 0")
        if self.loss_kind not in LOSS_KINDS:
            raise ConfigError(f"unknown loss kind {self.loss_kind!r}")
        if self.x0 not in ("setpoint", "zero"):
            raise ConfigError("x0 must be 'setpoint' or 'zero'")
        self.betas = tuple(self.betas)


@dataclass
class TrainLog:
    epoch: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    control_cost: list = field(default_factory=list)
    forecast_mse: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)

    def append(self, epoch, loss, jc, jf, wall):
        self.epoch.append(epoch)
        self.loss.append(float(loss))
        self.control_cost.append(float(jc))
        self.forecast_mse.append(float(jf))
        self.wall_time.append(float(wall))

    def to_dict(self, timings=True):
        d = asdict(self)
        if not timings:
            d.pop("wall_time")
        return d

    def save(self, path):
        path = Path(path)
        if path.suffix == ".csv":
            rows = ["epoch,loss,control_cost,forecast_mse,wall_time"]
            rows += [f"{e},{l!r},{c!r},{f!r},{w!r}" for e, l, c, f, w in
                     zip(self.epoch, self.loss, self.control_cost, self.forecast_mse, self.wall_time)]
            path.write_text("\n".join(rows) + "\n")
        else:
            path.write_text(json.dumps(self.to_dict(), indent=2))


def adam_step(params, grads, state, lr, betas=(0.9, 0.999), eps=1e-8):
    """One bias-corrected Adam update. ``state`` is ``{"t": int, "m": {}, "v": {}}``
    and is updated in place; returns the new parameter dict."""
    b1, b2 = betas
    state["t"] = t = state.get("t", 0) + 1
    m, v = state.setdefault("m", {}), state.setdefault("v", {})
    out = {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise DimensionError(f"gradient for {k} has shape {g.shape}, parameter {p.shape}")
        m[k] = b1 * m.get(k, 0.0) + (1 - b1) * g
        v[k] = b2 * v.get(k, 0.0) + (1 - b2) * g * g
        m_hat = m[k] / (1 - b1 ** t)
        v_hat = v[k] / (1 - b2 ** t)
        out[k] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    return out


def _clip(grads, max_norm):
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm and norm > max_norm:
        f = max_norm / norm
        return {k: g * f for k, g in grads.items()}, norm
    return grads, norm


def initial_state(problem, how):
    return problem.setpoint.copy() if how == "setpoint" else np.zeros(problem.n)


class _SeriesCache:
    """Per-series windows in scaled space, computed once."""

    def __init__(self, model, data):
        self.items = []
        sc = model.scale
        for k in range(data.N):
            hist, fut = rollout_windows(data.data[k], data.T, data.W, model.H)
            hist_s = flatten(sc.apply(hist, axis=1)).T  # pW x T
            fut_s = flatten(sc.apply(fut, axis=1)).T  # pH x T
            X = hist_s if model.encoder_input == "history" else fut_s
            self.items.append((data.data[k], X, fut_s))


def series_loss(model, problem, series, X, S_true, cfg, x0, T, W, baseline=None, params=None):
    """Forward one rollout on a fresh tape. Returns (tape, leaves, loss, diagnostics)."""
    tape = ad.Tape()
    P = model.params if params is None else params
    leaves = {k: tape.var(v, name=k) for k, v in P.items()}
    _, s_hat = forward(model, X, leaves)  # pH x T, scaled
    p, H = model.p, model.H
    if model.mode == "task-agnostic":
        loss = ad.sqnorm(s_hat - S_true) * (1.0 / T)
        jf = float(np.sum((s_hat.value[:p] - S_true[:p]) ** 2)) / T
        return tape, leaves, loss, {"control_cost": float("nan"), "forecast_mse": jf, "baseline": baseline}
    gain = model.scale.flat_gain(H)[:, None]
    offset = model.scale.flat_offset(H)[:, None]
    s_phys = (s_hat - offset) * (1.0 / gain)
    u, ro = mpc_rollout_op(problem, s_phys, series, T, W, x0, unroll=cfg.unroll)
    dr = DiffRollout(u, s_hat, S_true, ro, problem, x0, baseline)
    lam = model.lambda_f
    if cfg.loss_kind == "total":
        if baseline is None:
            dr.baseline_cost = perfect_cost(problem, series, T, W, x0)
        loss = loss_total(dr, lam)
    else:
        loss = loss_surrogate(dr, lam)
    jf = float(np.sum((s_hat.value[:p] - S_true[:p]) ** 2)) / T
    return tape, leaves, loss, {"control_cost": ro.cost, "forecast_mse": jf, "baseline": dr.baseline_cost}


def _loss_and_grads(model, problem, item, cfg, x0, T, W, baseline):
    series, X, S_true = item
    _, leaves, loss, diag = series_loss(model, problem, series, X, S_true, cfg, x0, T, W, baseline)
    grads = ad.backward(loss)
    return float(loss.value), {k: grads[v] for k, v in leaves.items()}, diag


def train(model, problem, data, cfg, log_every=0, logger=None):
    """Train ``model`` in place on physical-unit ``data``; returns (model, TrainLog).

    The controller ``problem`` is never modified. Scaling is fitted on ``data``
    unless the model already carries non-identity scale parameters.
    """
    if model.p != problem.p or model.H != problem.H:
        raise DimensionError("model and controller disagree on p or H")
    if data.p != model.p or data.W < model.W:
        raise DimensionError("data does not match the model dimensions")
    if model.mode != "task-agnostic" and problem.kind != "linear" and cfg.loss_kind == "total":
        raise ConfigError("the streaming scenario trains with the surrogate loss only")
    if model.scale.mode == "none" and getattr(cfg, "scale_mode", None):
        model.scale = fit_scale(data.data, cfg.scale_mode)
    T, W = data.T, model.W
    x0 = initial_state(problem, cfg.x0)
    cache = _SeriesCache(model, data)
    baselines = [None] * data.N
    state = {}
    log = TrainLog()
    order_rng = np.random.default_rng(cfg.seed)
    N = data.N
    bs = N if not cfg.batch_size else min(cfg.batch_size, N)
    last_good = model.copy()
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for epoch in range(cfg.epochs):
            t0 = time.perf_counter()
            idx = np.arange(N) if bs == N else order_rng.permutation(N)
            ep_loss, ep_jc, ep_jf = [], [], []
            for start in range(0, N, bs):
                batch = idx[start:start + bs]

                def job(k):
                    return _loss_and_grads(model, problem, cache.items[k], cfg, x0, T, W, baselines[k])

                results = list(pool.map(job, batch)) if pool else [job(k) for k in batch]
                grads = {k: np.zeros_like(v) for k, v in model.params.items()}
                loss = 0.0
                for k, (l, g, diag) in zip(batch, results):  # ordered reduction
                    baselines[k] = diag["baseline"]
                    loss += l / len(batch)
                    for name in grads:
                        grads[name] += g[name] / len(batch)
                    ep_jc.append(diag["control_cost"])
                    ep_jf.append(diag["forecast_mse"])
                ep_loss.append(loss)
                if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                    model.params = last_good.params
                    raise DivergenceError(f"non-finite loss at epoch {epoch}", model=model, log=log)
                last_good = model.copy()
                grads, _ = _clip(grads, cfg.grad_clip)
                if cfg.lr > 0:
                    new = adam_step(model.params, grads, state, cfg.lr, cfg.betas, cfg.eps)
                    if not all(np.all(np.isfinite(v)) for v in new.values()):
                        model.params = last_good.params
                        raise DivergenceError(f"non-finite parameters after the step in epoch {epoch}",
                                              model=model, log=log)
                    model.params = new
            log.append(epoch, np.mean(ep_loss), np.mean(ep_jc), np.mean(ep_jf), time.perf_counter() - t0)
            if logger and log_every and (epoch % log_every == 0 or epoch == cfg.epochs - 1):
                logger(f"epoch {epoch}: loss={log.loss[-1]:.6g} J={log.control_cost[-1]:.6g} "
                       f"JF={log.forecast_mse[-1]:.6g}")
            if cfg.checkpoint_every and cfg.checkpoint_dir and (epoch + 1) % cfg.checkpoint_every == 0:
                Path(cfg.checkpoint_dir).mkdir(parents=True, exist_ok=True)
                save_model(model, Path(cfg.checkpoint_dir) / f"epoch_{epoch + 1:05d}.npz")
    finally:
        if pool:
            pool.shutdown()
    return model, log
