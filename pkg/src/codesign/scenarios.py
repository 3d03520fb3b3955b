"""Canned scenario definitions: data source, controller and model dimensions."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .lqr import LtiSpec
from .mpc import MpcProblem, lti_spec_for
from .timeseries import SCALE_MODES, Component, GeneratorConfig, generate, load_csv

NAMES = ("smart-factory", "taxi", "battery", "streaming", "lqr-full", "lqr-mpc")
EVALUATIONS = ("mpc", "full-horizon")


@dataclass
class ScenarioSpec:
    name: str
    n: int
    T: int
    W: int
    H: int
    problem: dict
    scale_mode: str = "unit-interval"
    n_train: int = 15
    n_test: int = 15
    epochs: int = 1000
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    x0: str = "setpoint"
    evaluation: str = "mpc"
    cost_scale: float = 1.0  # applied to reported costs only
    data_path: str = None  # CSV directory replacing the generator
    analytic: bool = False  # codecs fitted in closed form rather than trained

    def __post_init__(self):
        if min(self.n, self.T, self.W, self.H, self.n_train, self.n_test, self.epochs) < 1:
            raise ConfigError("dimensions, counts and epochs must be >= 1")
        if self.scale_mode not in SCALE_MODES:
            raise ConfigError(f"unknown scale mode {self.scale_mode!r}")
        if self.x0 not in ("setpoint", "zero"):
            raise ConfigError("x0 must be 'setpoint' or 'zero'")
        if self.evaluation not in EVALUATIONS:
            raise ConfigError(f"unknown evaluation {self.evaluation!r}")
        if isinstance(self.generator, dict):
            self.generator = GeneratorConfig.from_dict(self.generator)
        pr = self.mpc_problem()
        if pr.n != self.n or pr.H != self.H:
            raise ConfigError("problem dimensions disagree with the scenario")

    @property
    def p(self):
        return self.n

    @property
    def m(self):
        return self.n

    def mpc_problem(self):
        return MpcProblem.from_dict(self.problem)

    def lti_spec(self):
        """Input-driven LQR equivalent (A = B = I, C -> -diag(s_gain))."""
        pr = self.mpc_problem()
        if pr.kind != "linear" or pr.gamma_e != pr.gamma_s or pr.bounded:
            raise ConfigError(f"{self.name} has no unconstrained quadratic equivalent")
        return lti_spec_for(pr, self.H)

    def with_(self, **kw):
        return replace(self, **kw)

    def data(self, split="train", seed=None):
        """Train or test series. Test series use indices disjoint from training."""
        if split not in ("train", "test"):
            raise ConfigError("split must be 'train' or 'test'")
        if self.data_path:
            from pathlib import Path

            batch = load_csv(Path(self.data_path) / split, self.T, self.W, self.H)
            if batch.p != self.p:
                raise ConfigError(f"CSV data has p={batch.p}, scenario needs {self.p}")
            return batch
        gen = self.generator if seed is None else replace(self.generator, seed=seed)
        N, start = (self.n_train, 0) if split == "train" else (self.n_test, 1_000_000)
        return generate(gen, N, self.p, self.T, self.W, self.H, start=start)

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["generator"] = self.generator.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown scenario keys: {sorted(extra)}")
        d = dict(d)
        if "generator" in d:
            d["generator"] = GeneratorConfig.from_dict(d["generator"])
        return cls(**d)

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)


def load_scenario(path):
    try:
        with open(path) as f:
            return ScenarioSpec.from_dict(json.load(f))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


_FAST_KINDS = ("square", "sawtooth", "square", "square", "sine")


def _lqr_components(p):
    """Slow trend (sine + log) plus two fast periodic components per dimension.

    The fast parts have periods of a few steps: they carry much of the variance
    but largely cancel over a planning window.
    """
    return tuple(
        (Component("sine", 1.0, 40.0 + 7.0 * i, 0.0), Component("log", 0.5, 20.0, 0.0),
         Component(_FAST_KINDS[i % 5], 0.5, 3.0 + i, 0.0), Component("sawtooth", 0.5, 5.5 + 0.5 * i, 0.0))
        for i in range(p)
    )


def _lqr_generator(seed=0):
    return GeneratorConfig(components=_lqr_components(5), noise_std=0.02, seed=seed)


def _problem(n, H, **kw):
    return MpcProblem(n, H, **kw).to_dict()


def builtin(name, seed=0):
    ones = lambda k, v: [float(v)] * k  # noqa: E731
    if name == "smart-factory":
        return ScenarioSpec(
            name, 4, 72, 15, 15,
            _problem(4, 15, setpoint=ones(4, 0.0), gamma_e=1.0, gamma_s=1.0, gamma_u=1.0,
                     u_min=ones(4, -0.95), u_max=ones(4, 0.95)),
            scale_mode="symmetric-unit", n_train=30, n_test=30, epochs=1000,
            generator=GeneratorConfig(seed=seed), x0="setpoint")
    if name == "taxi":
        return ScenarioSpec(
            name, 4, 32, 15, 15,
            _problem(4, 15, setpoint=ones(4, 0.0), gamma_e=1.0, gamma_s=100.0, gamma_u=1.0),
            scale_mode="unit-interval", n_train=17, n_test=17, epochs=1000,
            generator=GeneratorConfig(level=1.0, seed=seed), x0="zero")
    if name == "battery":
        return ScenarioSpec(
            name, 8, 122, 24, 24,
            _problem(8, 24, setpoint=ones(8, 1.0), gamma_e=1.0, gamma_s=1.0, gamma_u=1.0),
            scale_mode="unit-interval", n_train=15, n_test=15, epochs=2000,
            generator=GeneratorConfig(level=1.0, seed=seed), x0="setpoint")
    if name == "streaming":
        return ScenarioSpec(
            name, 4, 60, 15, 15,
            _problem(4, 15, kind="nonlinear-streaming", gamma_x=0.25, gamma_u=1.0,
                     L_x=ones(4, 0.5), L_u=ones(4, 0.2), noise_std=0.05, gamma_e=0.0, gamma_s=0.0),
            scale_mode="unit-interval", n_train=15, n_test=15, epochs=1000,
            generator=GeneratorConfig(amplitudes=(0.5,) * 4, level=2.0, seed=seed), x0="setpoint")
    if name == "lqr-full":
        return ScenarioSpec(
            name, 5, 100, 20, 20,
            _problem(5, 20, s_gain=list(np.arange(1.0, 6.0))),
            scale_mode="none", n_train=15, n_test=15, epochs=1000, generator=_lqr_generator(seed),
            x0="zero", evaluation="full-horizon", cost_scale=1e-3, analytic=True)
    if name == "lqr-mpc":
        return ScenarioSpec(
            name, 5, 100, 15, 15,
            _problem(5, 15, s_gain=list(np.arange(1.0, 6.0))),
            scale_mode="none", n_train=15, n_test=15, epochs=1000, generator=_lqr_generator(seed),
            x0="zero", analytic=True)
    raise ConfigError(f"unknown scenario {name!r}; choose from {', '.join(NAMES)}")


def c_matrix(spec):
    """The exogenous-input matrix C of ``x+ = x + u - C s``."""
    return np.diag(spec.mpc_problem().s_gain)


def full_horizon_spec(spec) -> LtiSpec:
    return spec.lti_spec()
