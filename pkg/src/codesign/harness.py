"""Experiments: fit or train a scheme, evaluate on held-out series, aggregate metrics."""
from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .codec import fit_task_agnostic, fit_task_aware
from .errors import CodesignError, ConfigError
from .forecaster import forecast_mse, forecaster, init_model
from .lqr import build_prediction, control_costs, optimal_controls
from .mpc import perfect_forecaster, rollout
from .timeseries import fit_scale, flatten, rollout_windows, sample_matrix, unflatten
from .trainer import TrainConfig, initial_state, train

SCHEMES = ("task-aware", "weighted", "task-agnostic")
SCHEMA_VERSION = 1
DEFAULT_WEIGHT = 1.0


def compression_gain(p, H, Z):
    """Full-forecast size over transmitted size, ``pH / Z``."""
    if Z < 1:
        raise ConfigError("Z must be >= 1")
    return p * H / Z


def scheme_lambda(scheme, lambda_f=None):
    if scheme == "task-aware":
        return 0.0
    if scheme == "weighted":
        lam = DEFAULT_WEIGHT if lambda_f is None else float(lambda_f)
        if not lam > 0:
            raise ConfigError("the weighted scheme needs lambda > 0")
        return lam
    if scheme == "task-agnostic":
        return None
    raise ConfigError(f"unknown scheme {scheme!r}; choose from {', '.join(SCHEMES)}")


def _quantiles(x):
    q = np.percentile(x, [10, 50, 90])
    return [float(v) for v in q]


@dataclass
class CellResult:
    """Metrics of one (scenario, scheme, Z, lambda, seed) run on the test series."""

    scenario: str
    scheme: str
    Z: int
    lambda_f: float
    seed: int
    gain: float
    status: str = "ok"
    error: str = None
    costs: list = field(default_factory=list)
    baseline_costs: list = field(default_factory=list)
    mean_cost: float = None
    quantiles: list = None
    baseline: float = None
    ratio: float = None
    control_mse: list = None  # per dimension
    forecast_mse: float = None
    forecast_error: list = None  # p x H, mean squared error by horizon offset
    trajectory: list = None  # states of the first test rollout

    def finalize(self):
        c = np.asarray(self.costs, float)
        b = np.asarray(self.baseline_costs, float)
        self.mean_cost = float(c.mean())
        self.quantiles = _quantiles(c)
        self.baseline = float(b.mean())
        self.ratio = self.mean_cost / self.baseline if self.baseline > 0 else math.inf
        return self

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class MetricsReport:
    cells: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    @property
    def failed(self):
        return [c for c in self.cells if c.status != "ok"]

    def ok_cells(self):
        return [c for c in self.cells if c.status == "ok"]

    def select(self, **kw):
        return [c for c in self.ok_cells() if all(getattr(c, k) == v for k, v in kw.items())]

    def to_dict(self):
        return {"schema_version": self.schema_version, "cells": [asdict(c) for c in self.cells]}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported report schema {d.get('schema_version')!r}")
        return cls([CellResult.from_dict(c) for c in d["cells"]], d["schema_version"])

    def save(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _atomic_write(out / "report.json", self.to_json())
        _atomic_write(out / "cells.csv", self.to_csv())

    def to_csv(self):
        cols = ["scenario", "scheme", "Z", "lambda_f", "seed", "gain", "status", "mean_cost", "q10", "q50",
                "q90", "baseline", "ratio", "forecast_mse"]
        lines = [",".join(cols)]
        for c in self.cells:
            q = c.quantiles or [None] * 3
            row = [c.scenario, c.scheme, c.Z, c.lambda_f, c.seed, c.gain, c.status, c.mean_cost, *q,
                   c.baseline, c.ratio, c.forecast_mse]
            lines.append(",".join("" if v is None else (repr(v) if isinstance(v, float) else str(v)) for v in row))
        return "\n".join(lines) + "\n"


def load_report(path):
    path = Path(path)
    if path.is_dir():
        path = path / "report.json"
    with open(path) as f:
        return MetricsReport.from_dict(json.load(f))


def _atomic_write(path, text):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as f:
        f.write(text)
    os.replace(tmp, path)


# ---------------------------------------------------------------- fitting

def fit_codec(spec, scheme, Z, lambda_f=None, train=None):
    """Closed-form codec on the true future windows of the training series."""
    train = spec.data("train") if train is None else train
    S = sample_matrix(train, spec.H)
    if scheme == "task-agnostic":
        return fit_task_agnostic(S, Z)
    Psi = build_prediction(spec.lti_spec()).Psi
    return fit_task_aware(Psi, scheme_lambda(scheme, lambda_f), S, Z)


def train_model(spec, scheme, Z, lambda_f=None, seed=0, train_data=None, epochs=None, lr=1e-3, hidden=(64, 64),
                loss_kind=None, unroll=False, logger=None, log_every=0):
    train_data = spec.data("train") if train_data is None else train_data
    lam = scheme_lambda(scheme, lambda_f)
    problem = spec.mpc_problem()
    if loss_kind is None:
        loss_kind = "total" if problem.kind == "linear" else "surrogate"
    scale = fit_scale(train_data.data, spec.scale_mode)
    model = init_model(spec.p, spec.W, spec.H, Z, hidden, scheme, lam or 0.0, seed=seed, scale=scale)
    cfg = TrainConfig(lambda_f=lam or 0.0, Z=Z, epochs=epochs or spec.epochs, lr=lr, seed=seed,
                      loss_kind=loss_kind, x0=spec.x0, unroll=unroll)
    model, log = train(model, problem, train_data, cfg, log_every=log_every, logger=logger)
    return model, log


def codec_forecaster(codec, p):
    def f(hist, fut, t):
        return unflatten(codec.reconstruct(flatten(fut)), p)

    return f


# ---------------------------------------------------------------- evaluation

def evaluate_forecaster(spec, fc, test=None, seed=0, rollout_dir=None, cell=None):
    """Closed-loop metrics of forecaster ``fc`` on the test series (MPC scenarios)."""
    test = spec.data("test") if test is None else test
    problem = spec.mpc_problem()
    x0 = initial_state(problem, spec.x0)
    costs, base, ctrl, fc_err, fmse = [], [], [], [], []
    traj = None
    for k in range(test.N):
        rs = None if problem.kind == "linear" else seed * 100_003 + k
        ro = rollout(problem, fc, test.data[k], spec.T, spec.W, x0, compute_star=True, seed=rs)
        ref = rollout(problem, perfect_forecaster, test.data[k], spec.T, spec.W, x0, compute_star=False, seed=rs)
        costs.append(ro.cost * spec.cost_scale)
        base.append(ref.cost * spec.cost_scale)
        ctrl.append(np.mean((ro.u_hat - ro.u_star) ** 2, axis=1))
        mse, mat = forecast_mse(ro.s_hat, ro.s_future)
        fmse.append(mse)
        fc_err.append(mat)
        if traj is None:
            traj = ro.x.tolist()
        if rollout_dir is not None:
            from .mpc import forecasts_to_csv, rollout_to_csv

            d = Path(rollout_dir)
            d.mkdir(parents=True, exist_ok=True)
            rollout_to_csv(ro, d / f"rollout_{k:03d}.csv")
            forecasts_to_csv(ro, d / f"forecasts_{k:03d}.csv")
            rollout_to_csv(ref, d / f"baseline_{k:03d}.csv")
    out = cell if cell is not None else {}
    vals = dict(costs=costs, baseline_costs=base, control_mse=np.mean(ctrl, axis=0).tolist(),
                forecast_mse=float(np.mean(fmse)), forecast_error=np.mean(fc_err, axis=0).tolist(),
                trajectory=traj)
    if cell is None:
        return vals
    for k, v in vals.items():
        setattr(out, k, v)
    return out.finalize()


def evaluate_full_horizon(spec, codec, test=None, cell=None):
    """Full-horizon LQR episodes, one per test window, x0 per the scenario."""
    test = spec.data("test") if test is None else test
    lti = spec.lti_spec()
    forms = build_prediction(lti)
    p, H = spec.p, spec.H
    x0 = initial_state(spec.mpc_problem(), spec.x0)
    costs, base, ctrl, err = [], [], [], []
    for k in range(test.N):
        _, fut = rollout_windows(test.data[k], spec.T, spec.W, H)
        S = np.stack([flatten(f) for f in fut], axis=1)
        S_hat = codec.reconstruct(S)
        U_hat = optimal_controls(forms, x0, S_hat)
        U = optimal_controls(forms, x0, S)
        c = control_costs(lti, x0, U_hat, S)
        b = control_costs(lti, x0, U, S)
        costs.append(float(np.mean(c)) * spec.cost_scale)
        base.append(float(np.mean(b)) * spec.cost_scale)
        ctrl.append(((U_hat - U) ** 2).reshape(H, p, -1).mean(axis=(0, 2)))
        err.append(((S_hat - S) ** 2).mean(axis=1).reshape(H, p).T)
    E = np.mean(err, axis=0)
    vals = dict(costs=costs, baseline_costs=base, control_mse=np.mean(ctrl, axis=0).tolist(),
                forecast_mse=float(E[:, 0].sum()), forecast_error=E.tolist(), trajectory=None)
    if cell is None:
        return vals
    for k, v in vals.items():
        setattr(cell, k, v)
    return cell.finalize()


def run_experiment(spec, scheme, Z, lambda_f=None, seed=0, *, epochs=None, analytic=None, rollout_dir=None,
                   train_kw=None):
    """Fit (closed form) or train the scheme, then evaluate on held-out series."""
    lam = scheme_lambda(scheme, lambda_f)
    if not 1 <= Z <= spec.p * spec.H:
        raise ConfigError(f"Z={Z} outside 1..{spec.p * spec.H}")
    cell = CellResult(spec.name, scheme, int(Z), lam, int(seed), compression_gain(spec.p, spec.H, Z))
    spec_s = spec.with_(generator=replace(spec.generator, seed=seed))
    train_data, test = spec_s.data("train"), spec_s.data("test")
    analytic = spec.analytic if analytic is None else analytic
    if analytic:
        codec = fit_codec(spec_s, scheme, Z, lam, train_data)
        if spec.evaluation == "full-horizon":
            return evaluate_full_horizon(spec_s, codec, test, cell)
        return evaluate_forecaster(spec_s, codec_forecaster(codec, spec.p), test, seed, rollout_dir, cell)
    if spec.evaluation == "full-horizon":
        raise ConfigError("full-horizon scenarios are evaluated with closed-form codecs only")
    model, _ = train_model(spec_s, scheme, Z, lam, seed, train_data, epochs=epochs, **(train_kw or {}))
    return evaluate_forecaster(spec_s, forecaster(model), test, seed, rollout_dir, cell)


def sweep(spec, zs, lambdas=(DEFAULT_WEIGHT,), schemes=SCHEMES, seeds=(0,), *, workers=1, out_dir=None,
          epochs=None, analytic=None, logger=None):
    """Cross product of runs. Failed cells are recorded and the sweep continues."""
    jobs = []
    for seed in seeds:
        for scheme in schemes:
            lams = lambdas if scheme == "weighted" else (None,)
            for lam in lams:
                for Z in zs:
                    jobs.append((scheme, int(Z), lam, int(seed)))

    def run(job):
        scheme, Z, lam, seed = job
        rdir = None
        if out_dir is not None:
            tag = f"{scheme}_Z{Z}_lam{scheme_lambda(scheme, lam)}_seed{seed}"
            rdir = Path(out_dir) / "rollouts" / tag
        try:
            cell = run_experiment(spec, scheme, Z, lam, seed, epochs=epochs, analytic=analytic, rollout_dir=rdir)
        except (CodesignError, ValueError, ArithmeticError) as exc:
            cell = CellResult(spec.name, scheme, Z, scheme_lambda(scheme, lam), seed,
                              compression_gain(spec.p, spec.H, Z), status="failed", error=f"{type(exc).__name__}: {exc}")
        if logger:
            logger(f"{scheme} Z={Z} lambda={lam} seed={seed}: "
                   + (f"ratio={cell.ratio:.4f}" if cell.status == "ok" else cell.error))
        return cell

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            cells = list(pool.map(run, jobs))
    else:
        cells = [run(j) for j in jobs]
    report = MetricsReport(cells)
    if out_dir is not None:
        report.save(out_dir)
    return report


def _label(scheme, lam):
    return scheme if scheme != "weighted" else f"weighted(lambda={lam:g})"


def report_min_z(report, tolerance=0.05, by_seed=False):
    """Smallest swept Z whose mean cost is within ``tolerance`` of the baseline.

    Keys are scheme labels (or ``(label, seed)`` with ``by_seed``); values are
    an int or ``"not reached"``.
    """
    groups = {}
    for c in report.ok_cells():
        key = _label(c.scheme, c.lambda_f)
        if by_seed:
            key = (key, c.seed)
        groups.setdefault(key, {}).setdefault(c.Z, []).append(c)
    out = {}
    for key, byz in groups.items():
        found = "not reached"
        for Z in sorted(byz):
            cs = byz[Z]
            mean = np.mean([np.mean(c.costs) for c in cs])
            base = np.mean([np.mean(c.baseline_costs) for c in cs])
            if mean <= (1.0 + tolerance) * base:
                found = Z
                break
        out[key] = found
    return out


def cost_curve(report, scheme, lambda_f=None, seed=None):
    """(Z, mean cost, q10, q90, baseline) arrays for one scheme, pooled over seeds unless given."""
    lam = scheme_lambda(scheme, lambda_f)
    cells = [c for c in report.ok_cells() if c.scheme == scheme and (lam is None or c.lambda_f == lam)
             and (seed is None or c.seed == seed)]
    zs = sorted({c.Z for c in cells})
    rows = []
    for Z in zs:
        cs = [c for c in cells if c.Z == Z]
        pooled = np.concatenate([c.costs for c in cs])
        rows.append((Z, pooled.mean(), *np.percentile(pooled, [10, 90]),
                     np.mean(np.concatenate([c.baseline_costs for c in cs]))))
    return np.array(rows).reshape(-1, 5)


def recompute_cell(rollout_dir, problem, cost_scale=1.0):
    """Re-derive a cell's metrics from its serialized rollouts alone."""
    from .mpc import forecasts_from_csv, rollout_from_csv, trajectory_cost

    d = Path(rollout_dir)
    costs, base, ctrl, err, fmse = [], [], [], [], []
    for path in sorted(d.glob("rollout_*.csv")):
        k = path.stem.split("_")[1]
        ro = rollout_from_csv(path)
        ref = rollout_from_csv(d / f"baseline_{k}.csv")
        s_hat, s_fut = forecasts_from_csv(d / f"forecasts_{k}.csv")
        costs.append(trajectory_cost(problem, ro.x, ro.u_hat) * cost_scale)
        base.append(trajectory_cost(problem, ref.x, ref.u_hat) * cost_scale)
        ctrl.append(np.mean((ro.u_hat - ro.u_star) ** 2, axis=1))
        m, mat = forecast_mse(s_hat, s_fut)
        fmse.append(m)
        err.append(mat)
    return dict(costs=costs, baseline_costs=base, control_mse=np.mean(ctrl, axis=0).tolist(),
                forecast_mse=float(np.mean(fmse)), forecast_error=np.mean(err, axis=0).tolist())


def write_spectrum_csv(codec, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["index", "singular_value"])
        for i, s in enumerate(codec.singular_values):
            w.writerow([i + 1, repr(float(s))])
