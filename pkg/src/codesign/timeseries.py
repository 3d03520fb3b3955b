"""Synthetic exogenous timeseries, scaling, windowing and CSV I/O.

A series is stored as a ``p x L`` array whose first column is time ``t = -W+1``.
``L = (W - 1) + T + (H - 1)``: the history needed at ``t = 0``, the rollout
itself, and enough lookahead that the last plan at ``t = T-1`` sees real data.

Flattening of a ``p x H`` block is time-major: ``[s_0(0..p-1), s_1(0..p-1), ...]``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError, ParseError

KINDS = ("log", "negexp", "sine", "square", "sawtooth")
SCALE_MODES = ("unit-interval", "symmetric-unit", "none")
PAD_MODES = ("hold-last", "error")


@dataclass(frozen=True)
class Component:
    kind: str
    amplitude: float = 1.0
    period: float = 24.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown component kind {self.kind!r}; expected one of {KINDS}")
        if not self.period > 0:
            raise ConfigError(f"component period must be positive, got {self.period}")


def default_components(p):
    """One component per dimension, cycling through the five kinds.

    Periods grow with the dimension index so dimensions are not in lockstep.
    """
    return tuple((Component(KINDS[i % len(KINDS)], 1.0, 12.0 + 4.0 * i, 0.0),) for i in range(p))


@dataclass
class GeneratorConfig:
    """Parameters of the synthetic signal family.

    ``components[i]`` lists the components superimposed on dimension ``i``; when
    empty, :func:`default_components` is used. ``amplitudes`` optionally rescales
    each dimension's base signal. With ``random_phase`` each series draws a phase
    offset per dimension from its own seed, so series differ in their base signal
    as well as in the noise.
    """

    components: tuple = ()
    amplitudes: tuple = ()
    noise_std: float = 0.05
    level: float = 0.0
    random_phase: bool = True
    seed: int = 0

    def __post_init__(self):
        self.components = tuple(
            tuple(c if isinstance(c, Component) else Component(**c) for c in dim) for dim in self.components
        )
        self.amplitudes = tuple(float(a) for a in self.amplitudes)
        if not self.noise_std >= 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in 64 unsigned bits")

    def dimension_components(self, p):
        comps = self.components or default_components(p)
        if len(comps) < p:
            raise ConfigError(f"config defines {len(comps)} dimensions, need {p}")
        return comps[:p]

    def to_dict(self):
        d = asdict(self)
        d["components"] = [[asdict(c) for c in dim] for dim in self.components]
        d["amplitudes"] = list(self.amplitudes)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown generator config keys: {sorted(extra)}")
        d = dict(d)
        d["components"] = tuple(tuple(Component(**c) for c in dim) for dim in d.get("components", ()))
        return cls(**d)


def load_generator_config(path):
    try:
        with open(path) as f:
            return GeneratorConfig.from_dict(json.load(f))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def save_generator_config(cfg, path):
    with open(path, "w") as f:
        json.dump(cfg.to_dict(), f, indent=2)


@dataclass
class SeriesBatch:
    data: np.ndarray  # (N, p, W-1+T+H-1)
    T: int
    W: int
    H: int = 1

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 3:
            raise DimensionError(f"series data must be (N, p, L), got shape {self.data.shape}")
        if min(self.T, self.W, self.H) < 1:
            raise DimensionError("T, W, H must be >= 1")
        if self.data.shape[2] != self.length:
            raise DimensionError(
                f"series length {self.data.shape[2]} != (W-1)+T+(H-1) = {self.length}"
            )

    @property
    def N(self):
        return self.data.shape[0]

    @property
    def p(self):
        return self.data.shape[1]

    @property
    def length(self):
        return self.W - 1 + self.T + self.H - 1

    def column(self, t):
        return t + self.W - 1

    def times(self):
        return np.arange(-self.W + 1, self.T + self.H - 1)

    def subset(self, idx):
        return SeriesBatch(self.data[idx], self.T, self.W, self.H)


@dataclass
class WindowPair:
    history: np.ndarray  # (N, p, W): s_{t-W+1..t}
    future: np.ndarray  # (N, p, H): s_{t..t+H-1}
    t: int


def _base_signal(dims, times, phases, amplitudes):
    p = len(dims)
    out = np.zeros((p, len(times)))
    for i, comps in enumerate(dims):
        for c, ph in zip(comps, phases[i]):
            x = times / c.period + (c.phase + ph) / (2 * math.pi)
            if c.kind == "sine":
                v = np.sin(2 * math.pi * x)
            elif c.kind == "square":
                v = np.where(np.sin(2 * math.pi * x) >= 0, 1.0, -1.0)
            elif c.kind == "sawtooth":
                v = 2.0 * (x - np.floor(x)) - 1.0
            else:
                # monotone kinds: shift so the argument is nonnegative over the series
                tau = (times - times[0]) / c.period + (c.phase + ph) / (2 * math.pi)
                v = np.log1p(tau) if c.kind == "log" else np.exp(-tau)
            out[i] += c.amplitude * v
        if amplitudes:
            out[i] *= amplitudes[i]
    return out


def _series_rng(seed, index):
    return np.random.default_rng([int(seed), int(index)])


def _phases(cfg, dims, rng):
    if cfg.random_phase:
        return [rng.uniform(0, 2 * math.pi, size=len(comps)) for comps in dims]
    return [np.zeros(len(comps)) for comps in dims]


def base_signal(cfg, p, T, W, H=1, index=0):
    """Deterministic part of series ``index`` (without the random walk)."""
    dims = cfg.dimension_components(p)
    rng = _series_rng(cfg.seed, index)
    phases = _phases(cfg, dims, rng)
    times = np.arange(-W + 1, T + H - 1, dtype=float)
    return cfg.level + _base_signal(dims, times, phases, cfg.amplitudes)


def generate(cfg, N, p, T, W, H=1, start=0):
    """Draw ``N`` series of ``p`` dimensions covering times ``-W+1 .. T+H-2``.

    Series ``k`` uses the generator ``default_rng([seed, start + k])``, so
    disjoint ``start`` ranges give independent train/test sets and series can be
    produced in any order or in parallel.
    """
    if min(N, p, T, W, H) < 1:
        raise ConfigError("N, p, T, W, H must all be >= 1")
    dims = cfg.dimension_components(p)
    times = np.arange(-W + 1, T + H - 1, dtype=float)
    out = np.empty((N, p, len(times)))
    for k in range(N):
        rng = _series_rng(cfg.seed, start + k)
        phases = _phases(cfg, dims, rng)
        base = cfg.level + _base_signal(dims, times, phases, cfg.amplitudes)
        if cfg.noise_std > 0:
            base = base + np.cumsum(rng.normal(0.0, cfg.noise_std, size=base.shape), axis=1)
        out[k] = base
    return SeriesBatch(out, T, W, H)


# ---------------------------------------------------------------- scaling

@dataclass
class ScaleParams:
    """Per-dimension affine map ``y = gain * x + offset``."""

    mode: str
    gain: np.ndarray
    offset: np.ndarray
    constant: np.ndarray = field(default=None)

    def apply(self, x, axis=-2):
        g, o = self._shaped(x, axis)
        return g * x + o

    def invert(self, y, axis=-2):
        g, o = self._shaped(y, axis)
        return (y - o) / g

    def _shaped(self, x, axis):
        shape = [1] * np.ndim(x)
        shape[axis] = -1
        return self.gain.reshape(shape), self.offset.reshape(shape)

    def flat_gain(self, H):
        return np.tile(self.gain, H)

    def flat_offset(self, H):
        return np.tile(self.offset, H)

    def to_dict(self):
        return {"mode": self.mode, "gain": self.gain.tolist(), "offset": self.offset.tolist(),
                "constant": self.constant.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["mode"], np.asarray(d["gain"], float), np.asarray(d["offset"], float),
                   np.asarray(d["constant"], bool))

    @classmethod
    def identity(cls, p):
        return cls("none", np.ones(p), np.zeros(p), np.zeros(p, bool))


def fit_scale(data, mode):
    """Fit per-dimension scaling on ``data`` of shape (N, p, L)."""
    if mode not in SCALE_MODES:
        raise ConfigError(f"unknown scale mode {mode!r}")
    data = np.asarray(data, float)
    if data.size == 0:
        raise DimensionError("cannot scale an empty batch")
    p = data.shape[1]
    if mode == "none":
        return ScaleParams.identity(p)
    lo = data.min(axis=(0, 2))
    hi = data.max(axis=(0, 2))
    a, b = (0.0, 1.0) if mode == "unit-interval" else (-1.0, 1.0)
    const = ~(hi > lo)
    denom = np.where(const, 1.0, hi - lo)
    gain = np.where(const, 1.0, (b - a) / denom)
    offset = np.where(const, 0.5 * (a + b) - lo, a - gain * lo)
    return ScaleParams(mode, gain, offset, const)


def scale(batch, mode="unit-interval", params=None):
    """Scale a batch; pass ``params`` fitted on training data to reuse them verbatim."""
    if params is None:
        params = fit_scale(batch.data, mode)
    return SeriesBatch(params.apply(batch.data, axis=1), batch.T, batch.W, batch.H), params


def unscale(batch, params):
    return SeriesBatch(params.invert(batch.data, axis=1), batch.T, batch.W, batch.H)


# ---------------------------------------------------------------- windows

def flatten(block):
    """``(..., p, H)`` -> ``(..., p*H)`` in time-major order."""
    block = np.asarray(block)
    return np.swapaxes(block, -1, -2).reshape(block.shape[:-2] + (-1,))


def unflatten(flat, p):
    flat = np.asarray(flat)
    H = flat.shape[-1] // p
    return np.swapaxes(flat.reshape(flat.shape[:-1] + (H, p)), -1, -2)


def _future_cols(batch, t, H, pad):
    start = batch.column(t)
    idx = np.arange(start, start + H)
    last = batch.length - 1
    if idx[-1] > last:
        if pad == "error":
            raise IndexError(f"future window at t={t} with H={H} runs past the data")
        idx = np.minimum(idx, last)
    return idx


def windows(batch, t, H=None, pad="hold-last"):
    if pad not in PAD_MODES:
        raise ConfigError(f"unknown pad mode {pad!r}")
    if not 0 <= t <= batch.T - 1:
        raise IndexError(f"t={t} outside 0..{batch.T - 1}")
    H = batch.H if H is None else H
    c = batch.column(t)
    hist = batch.data[:, :, c - batch.W + 1: c + 1]
    fut = batch.data[:, :, _future_cols(batch, t, H, pad)]
    return WindowPair(hist, fut, t)


def rollout_windows(series, T, W, H, pad="hold-last"):
    """All windows of one ``p x L`` series: returns (T, p, W) history and (T, p, H) future."""
    series = np.asarray(series, float)
    need = W - 1 + T + H - 1
    if series.shape[1] < need:
        if pad == "error":
            raise IndexError(f"series has {series.shape[1]} columns, need {need}")
        extra = np.repeat(series[:, -1:], need - series.shape[1], axis=1)
        series = np.concatenate([series, extra], axis=1)
    view_h = np.lib.stride_tricks.sliding_window_view(series, W, axis=1)[:, :T]  # (p, T, W)
    view_f = np.lib.stride_tricks.sliding_window_view(series[:, W - 1:], H, axis=1)[:, :T]
    return np.ascontiguousarray(view_h.transpose(1, 0, 2)), np.ascontiguousarray(view_f.transpose(1, 0, 2))


def sample_matrix(batch, H=None, pad="hold-last"):
    """Stack every (series, t) future window as a column: shape (p*H, N*T)."""
    H = batch.H if H is None else H
    cols = []
    for k in range(batch.N):
        _, fut = rollout_windows(batch.data[k], batch.T, batch.W, H, pad)
        cols.append(flatten(fut))
    return np.concatenate(cols, axis=0).T


# ---------------------------------------------------------------- CSV

_HEADER_PREFIX = "#"


def _write_series(path, series, T, W, H, N, index):
    with open(path, "w", newline="") as f:
        f.write(f"{_HEADER_PREFIX}p={series.shape[0]},T={T},W={W},H={H},N={N},index={index}\n")
        w = csv.writer(f)
        w.writerow(["t"] + [f"s{i}" for i in range(series.shape[0])])
        for j, t in enumerate(range(-W + 1, -W + 1 + series.shape[1])):
            w.writerow([t] + [repr(float(v)) for v in series[:, j]])


def save_csv(batch, path):
    """Write one CSV per series.

    A path ending in ``.csv`` is only accepted for single-series batches;
    otherwise ``path`` is a directory receiving ``series_000.csv`` etc.
    """
    path = Path(path)
    if path.suffix == ".csv":
        if batch.N != 1:
            raise DimensionError("a .csv target holds exactly one series; pass a directory")
        _write_series(path, batch.data[0], batch.T, batch.W, batch.H, 1, 0)
        return [path]
    path.mkdir(parents=True, exist_ok=True)
    out = []
    for k in range(batch.N):
        fp = path / f"series_{k:03d}.csv"
        _write_series(fp, batch.data[k], batch.T, batch.W, batch.H, batch.N, k)
        out.append(fp)
    return out


def _parse_header(line, fname):
    meta = {}
    for part in line[len(_HEADER_PREFIX):].strip().split(","):
        if "=" not in part:
            raise ParseError(f"{fname}: malformed header entry {part!r}", row=1)
        k, v = part.split("=", 1)
        try:
            meta[k.strip()] = int(v)
        except ValueError:
            raise ParseError(f"{fname}: header value {v!r} is not an integer", row=1) from None
    return meta


def _read_series(path, W=None):
    with open(path, newline="") as f:
        lines = f.read().splitlines()
    if not any(line.strip() for line in lines):
        raise ParseError(f"{path}: empty dataset")
    meta = {}
    row0 = 0
    if lines[0].startswith(_HEADER_PREFIX):
        meta = _parse_header(lines[0], path)
        row0 = 1
    reader = list(csv.reader(lines[row0:]))
    if not reader:
        raise ParseError(f"{path}: empty dataset")
    header = reader[0]
    has_t = header and header[0].strip() == "t"
    try:
        float(header[0])
        body_start = 0  # no column header row
    except ValueError:
        body_start = 1
    rows = reader[body_start:]
    if not rows:
        raise ParseError(f"{path}: empty dataset")
    width = len(rows[0])
    vals = []
    for r, row in enumerate(rows):
        lineno = row0 + body_start + r + 1
        if len(row) != width:
            raise ParseError(f"{path}: expected {width} cells, found {len(row)}", row=lineno)
        try:
            vals.append([float(c) for c in row])
        except ValueError:
            bad = next(j for j, c in enumerate(row) if not _is_float(c))
            raise ParseError(f"{path}: non-numeric cell {row[bad]!r}", row=lineno, column=bad + 1) from None
    arr = np.asarray(vals, float)
    if has_t:
        arr = arr[:, 1:]
    if not np.all(np.isfinite(arr)):
        raise ParseError(f"{path}: non-finite value")
    return arr.T, meta


def _is_float(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def load_csv(path, T=None, W=None, H=None, pad="hold-last"):
    """Load a file (one series) or a directory of ``*.csv`` files into a batch.

    Files written by :func:`save_csv` carry T/W/H in their header. Headerless
    files need ``T`` and ``W``; missing lookahead is filled with ``pad``.
    """
    path = Path(path)
    files = sorted(path.glob("*.csv")) if path.is_dir() else [path]
    if not files:
        raise ParseError(f"{path}: empty dataset")
    series, metas = zip(*(_read_series(f) for f in files))
    meta = metas[0]
    T = T if T is not None else meta.get("T")
    W = W if W is not None else meta.get("W")
    H = H if H is not None else meta.get("H", 1)
    if T is None or W is None:
        raise ParseError(f"{path}: T and W are not in the header; pass them explicitly")
    p = series[0].shape[0]
    need = W - 1 + T + H - 1
    out = np.empty((len(series), p, need))
    for k, s in enumerate(series):
        if s.shape[0] != p:
            raise ParseError(f"{files[k]}: {s.shape[0]} dimensions, expected {p}")
        if s.shape[1] < W - 1 + T:
            raise ParseError(f"{files[k]}: {s.shape[1]} rows, need at least W-1+T = {W - 1 + T}")
        if s.shape[1] < need:
            if pad == "error":
                raise ParseError(f"{files[k]}: {s.shape[1]} rows, need {need}")
            s = np.concatenate([s, np.repeat(s[:, -1:], need - s.shape[1], axis=1)], axis=1)
        out[k] = s[:, :need]
    return SeriesBatch(out, T, W, H)


__all__ = [
    "Component", "GeneratorConfig", "SeriesBatch", "WindowPair", "ScaleParams",
    "generate", "base_signal", "scale", "unscale", "fit_scale", "windows", "rollout_windows",
    "sample_matrix", "flatten", "unflatten", "save_csv", "load_csv",
    "load_generator_config", "save_generator_config",
]
