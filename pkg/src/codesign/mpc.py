"""Receding-horizon MPC for the box-constrained linear scenarios and the
nonlinear streaming scenario.

Linear scenario, per horizon window::

    x_{k+1} = x_k + u_k - c * s_k,         u_min <= u_k <= u_max
    cost    = sum_{k=0}^{H} g_e |[x_k - L]_+|^2 + g_s |[L - x_k]_+|^2
            + sum_{k=0}^{H-1} g_u |u_k|^2

Writing ``x_k - L = e_k - d_k`` with ``e, d >= 0`` turns the cost into a convex
QP. For fixed ``u`` the optimal split is ``e = [r]_+``, ``d = [-r]_+`` with
``r = x - L``, so the QP is solved in its reduced form: a convex, C^1,
piecewise-quadratic function of ``u`` under box bounds, minimised exactly by a
projected Newton active-set iteration. Every quantity (dynamics, cost, bounds)
is elementwise in the dimension index, so the ``n`` dimensions are independent
chains of length ``H`` and are solved as a batch.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from .errors import ConfigError, DimensionError, SolverError
from .lqr import LtiSpec, build_prediction, optimal_control

KINDS = ("linear", "nonlinear-streaming")
KKT_TOL = 1e-8
SOFTPLUS_BETA = 50.0


def _vec(v, n, name, fill=None):
    if v is None:
        v = fill
    a = np.asarray(v, float)
    if a.ndim == 0:
        a = np.full(n, float(a))
    if a.shape != (n,):
        raise DimensionError(f"{name} must have length {n}, got shape {a.shape}")
    a = a.copy()
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class MpcProblem:
    """Controller parameters. ``n = m = p``; ``s_gain`` is the diagonal of the
    exogenous-input matrix (the dynamics subtract ``s_gain * s``)."""

    n: int
    H: int
    setpoint: np.ndarray = None
    gamma_e: float = 1.0
    gamma_s: float = 1.0
    gamma_u: float = 1.0
    u_min: np.ndarray = None
    u_max: np.ndarray = None
    s_gain: np.ndarray = None
    kind: str = "linear"
    # nonlinear streaming only
    L_x: np.ndarray = None
    L_u: np.ndarray = None
    gamma_x: float = 0.25
    noise_std: float = 0.0
    throughput_floor: float = 0.05

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown problem kind {self.kind!r}")
        if self.n < 1 or self.H < 1:
            raise ConfigError("n and H must be >= 1")
        n = self.n
        set_ = object.__setattr__
        set_(self, "setpoint", _vec(self.setpoint, n, "setpoint", 0.0))
        set_(self, "u_min", _vec(self.u_min, n, "u_min", -np.inf))
        set_(self, "u_max", _vec(self.u_max, n, "u_max", np.inf))
        set_(self, "s_gain", _vec(self.s_gain, n, "s_gain", 1.0))
        set_(self, "L_x", _vec(self.L_x, n, "L_x", 0.0))
        set_(self, "L_u", _vec(self.L_u, n, "L_u", 0.0))
        if np.any(self.u_min > self.u_max):
            raise ConfigError("infeasible box: u_min > u_max")
        gammas = (self.gamma_e, self.gamma_s, self.gamma_u, self.gamma_x)
        if min(gammas) < 0:
            raise ConfigError("cost weights must be >= 0")
        if self.kind == "linear":
            if max(self.gamma_e, self.gamma_s, self.gamma_u) <= 0:
                raise ConfigError("at least one of gamma_e, gamma_s, gamma_u must be positive")
            if self.gamma_u <= 0 and min(self.gamma_e, self.gamma_s) <= 0:
                raise ConfigError("gamma_u = 0 needs both gamma_e and gamma_s positive")
        elif self.gamma_u <= 0:
            raise ConfigError("streaming scenario needs gamma_u > 0")
        if self.noise_std < 0 or self.throughput_floor <= 0:
            raise ConfigError("noise_std must be >= 0 and throughput_floor > 0")

    @property
    def m(self):
        return self.n

    @property
    def p(self):
        return self.n

    @property
    def bounded(self):
        return bool(np.any(np.isfinite(self.u_min)) or np.any(np.isfinite(self.u_max)))

    def with_(self, **kw):
        return replace(self, **kw)

    def to_dict(self):
        d = {}
        for k in self.__dataclass_fields__:
            v = getattr(self, k)
            d[k] = [float(x) for x in v] if isinstance(v, np.ndarray) else v
        return d

    @classmethod
    def from_dict(cls, d):
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown problem keys: {sorted(extra)}")
        return cls(**d)

    def fingerprint(self):
        """Bytes that change whenever any parameter changes."""
        parts = []
        for k in self.__dataclass_fields__:
            v = getattr(self, k)
            parts.append(np.asarray(v, float).tobytes() if isinstance(v, np.ndarray) else repr(v).encode())
        return b"|".join(parts)


@dataclass
class PlanResult:
    u_plan: np.ndarray  # m x H
    x_pred: np.ndarray  # n x (H+1)
    cost: float
    active_set: np.ndarray  # n x H ints: -1 lower, +1 upper, 0 free
    kkt_residual: float
    iterations: int = 0
    # piece weights (linear) used for implicit differentiation
    weights: np.ndarray = field(default=None, repr=False)
    forecast: np.ndarray = field(default=None, repr=False)
    x0: np.ndarray = field(default=None, repr=False)
    problem: MpcProblem = field(default=None, repr=False)


# ---------------------------------------------------------------- linear QP

def _chain_state(problem, x0, s_hat, v):
    """Deviations r (n x (H+1)) of the predicted states from the setpoint."""
    a = x0 - problem.setpoint
    drift = v - problem.s_gain[:, None] * s_hat
    r = np.empty((problem.n, v.shape[1] + 1))
    r[:, 0] = a
    r[:, 1:] = a[:, None] + np.cumsum(drift, axis=1)
    return r


def _piece_weights(problem, r):
    return np.where(r > 0, problem.gamma_e, problem.gamma_s)


def _objective(problem, r, v):
    w = _piece_weights(problem, r)
    return np.sum(w * r * r, axis=1) + problem.gamma_u * np.sum(v * v, axis=1)


def _gradient(problem, r, v):
    w = _piece_weights(problem, r)[:, 1:]
    wr = w * r[:, 1:]
    return 2.0 * np.cumsum(wr[:, ::-1], axis=1)[:, ::-1] + 2.0 * problem.gamma_u * v


def _hessian(problem, w):
    """2 (G' W G + g_u I) per dimension; (G'WG)_{jk} = sum_{l >= max(j,k)} w_l."""
    H = w.shape[1]
    suffix = np.cumsum(w[:, ::-1], axis=1)[:, ::-1]
    idx = np.maximum.outer(np.arange(H), np.arange(H))
    return 2.0 * (suffix[:, idx] + problem.gamma_u * np.eye(H))


def _natural_residual(v, g, lo, hi):
    return np.abs(v - np.clip(v - g, lo, hi))


def _classify(v, g, lo, hi, scale):
    """Active-set labels; a coordinate at a bound with ~zero multiplier is free."""
    tol_x = 1e-10 * (1.0 + np.abs(v))
    tol_g = 1e-9 * scale
    at_lo = np.isfinite(lo) & (v - lo <= tol_x)
    at_hi = np.isfinite(hi) & (hi - v <= tol_x)
    act = np.zeros(v.shape, int)
    act[at_lo & (g > tol_g)] = -1
    act[at_hi & (g < -tol_g)] = 1
    return act


_QUAD_CACHE = {}


def _quadratic_inverse(problem, H):
    """Inverse Hessian of an unbounded plan with g_e = g_s (a plain quadratic)."""
    key = (problem.fingerprint(), H)
    inv = _QUAD_CACHE.get(key)
    if inv is None:
        if len(_QUAD_CACHE) > 64:
            _QUAD_CACHE.clear()
        inv = np.linalg.inv(_hessian(problem, np.full((problem.n, H), problem.gamma_e)))
        _QUAD_CACHE[key] = inv
    return inv


def _solve_linear(problem, x0, s_hat, warm=None, tol=1e-11, max_iter=200):
    n, H = s_hat.shape
    if not problem.bounded and problem.gamma_e == problem.gamma_s:
        # one exact Newton step from zero, then the usual checks below
        v = np.zeros((n, H))
        g = _gradient(problem, _chain_state(problem, x0, s_hat, v), v)
        v = -np.einsum("njk,nk->nj", _quadratic_inverse(problem, H), g)
        r = _chain_state(problem, x0, s_hat, v)
        g = _gradient(problem, r, v)
        scale = 1.0 + np.max(np.abs(g))
        res = float(np.max(np.abs(g)))
        if res <= tol * scale:
            return v, r, g, res, scale, 1
        warm = v
    lo = np.broadcast_to(problem.u_min[:, None], (n, H))
    hi = np.broadcast_to(problem.u_max[:, None], (n, H))
    v = np.zeros((n, H)) if warm is None else np.array(warm, float)
    v = np.clip(v, lo, hi)
    eye = np.eye(H)
    it = 0
    for it in range(1, max_iter + 1):
        r = _chain_state(problem, x0, s_hat, v)
        g = _gradient(problem, r, v)
        res = _natural_residual(v, g, lo, hi)
        scale = 1.0 + np.max(np.abs(g))
        if res.max() <= tol * scale:
            break
        eps = np.minimum(res.max(axis=1, keepdims=True), 1e-6)
        act = (np.isfinite(lo) & (v <= lo + eps) & (g > 0)) | (np.isfinite(hi) & (v >= hi - eps) & (g < 0))
        free = ~act
        Hm = _hessian(problem, _piece_weights(problem, r)[:, 1:])
        # reduced Newton system: active rows/cols replaced by identity
        mask = free[:, :, None] & free[:, None, :]
        Hr = np.where(mask, Hm, eye)
        rhs = np.where(free, -g, 0.0)
        d = np.linalg.solve(Hr, rhs[..., None])[..., 0]
        d = np.where(free, d, -g)
        f0 = _objective(problem, r, v)
        alpha = np.ones(n)
        done = np.zeros(n, bool)
        v_new = v.copy()
        for _ in range(60):
            trial = np.clip(v + alpha[:, None] * d, lo, hi)
            r_t = _chain_state(problem, x0, s_hat, trial)
            f_t = _objective(problem, r_t, trial)
            ok = f_t <= f0 + 1e-4 * np.sum(g * (trial - v), axis=1) + 1e-14 * (1 + np.abs(f0))
            newly = ok & ~done
            v_new[newly] = trial[newly]
            done |= ok
            if done.all():
                break
            alpha = np.where(done, alpha, 0.5 * alpha)
        if not done.any():
            break
        v = v_new
    r = _chain_state(problem, x0, s_hat, v)
    g = _gradient(problem, r, v)
    scale = 1.0 + np.max(np.abs(g))
    res = float(_natural_residual(v, g, lo, hi).max())
    return v, r, g, res, scale, it


def plan(problem, x_t, s_forecast, warm=None):
    """Optimal control plan for one window; the horizon is the forecast width."""
    x_t = np.asarray(x_t, float).ravel()
    s_hat = np.atleast_2d(np.asarray(s_forecast, float))
    if x_t.shape != (problem.n,) or s_hat.shape[0] != problem.p:
        raise DimensionError(f"expected x_t ({problem.n},) and forecast ({problem.p}, H)")
    if not np.all(np.isfinite(s_hat)):
        raise SolverError("forecast contains non-finite values")
    if problem.kind == "nonlinear-streaming":
        return _plan_streaming(problem, x_t, s_hat, warm)
    v, r, g, res, scale, it = _solve_linear(problem, x_t, s_hat, warm)
    if not res <= KKT_TOL * scale:
        raise SolverError(f"QP did not converge: KKT residual {res:.3g}", residual=res)
    lo = np.broadcast_to(problem.u_min[:, None], v.shape)
    hi = np.broadcast_to(problem.u_max[:, None], v.shape)
    act = _classify(v, g, lo, hi, scale)
    cost = float(np.sum(_objective(problem, r, v)))
    return PlanResult(v, r + problem.setpoint[:, None], cost, act, res / scale, it,
                      weights=_piece_weights(problem, r)[:, 1:], forecast=s_hat, x0=x_t, problem=problem)


def kkt_report(result):
    """Residuals of the split QP's KKT system at a returned plan.

    Multipliers are recovered in closed form: equality multipliers
    ``2 g_e e - 2 g_s d`` and bound multipliers from the reduced gradient.
    """
    pr = result.problem
    v = result.u_plan
    r = result.x_pred - pr.setpoint[:, None]
    g = _gradient(pr, r, v)
    lo = pr.u_min[:, None] * np.ones_like(v)
    hi = pr.u_max[:, None] * np.ones_like(v)
    mu_lo = np.where(result.active_set == -1, g, 0.0)
    mu_hi = np.where(result.active_set == 1, -g, 0.0)
    stat = g - mu_lo + mu_hi
    e = np.maximum(r, 0.0)
    d = np.maximum(-r, 0.0)
    scale = 1.0 + np.max(np.abs(g))
    with np.errstate(invalid="ignore"):
        gap_lo = np.where(np.isfinite(lo), v - lo, 0.0)
        gap_hi = np.where(np.isfinite(hi), hi - v, 0.0)
    primal = max(float(np.max(np.maximum(-gap_lo, 0.0))), float(np.max(np.maximum(-gap_hi, 0.0))),
                 float(np.max(np.abs(r - (e - d)))))
    comp = float(max(np.max(np.abs(mu_lo * gap_lo)), np.max(np.abs(mu_hi * gap_hi)),
                     np.max(np.abs(e * d))))
    return {
        "stationarity": float(np.max(np.abs(stat))) / scale,
        "primal": primal,
        "complementarity": comp / scale,
        "dual": float(max(np.max(np.maximum(-mu_lo, 0)), np.max(np.maximum(-mu_hi, 0)))) / scale,
    }


# ---------------------------------------------------------------- streaming

def softplus(z, beta=SOFTPLUS_BETA):
    return np.logaddexp(0.0, beta * z) / beta


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _streaming_grad(problem, x0, s_eff, v, beta=SOFTPLUS_BETA):
    """Cost and gradient of the smoothed streaming plan (adjoint recursion)."""
    n, H = v.shape
    Lx, Lu = problem.L_x[:, None], problem.L_u[:, None]
    x = np.empty((n, H + 1))
    z = np.empty((n, H))
    x[:, 0] = x0
    for k in range(H):
        z[:, k] = x[:, k] - v[:, k] / s_eff[:, k]
        x[:, k + 1] = softplus(z[:, k], beta) + Lx[:, 0]
    cost = problem.gamma_x * np.sum((x - Lx) ** 2) + problem.gamma_u * np.sum((v - Lu) ** 2)
    lam = 2 * problem.gamma_x * (x[:, H] - Lx[:, 0])
    gv = np.empty_like(v)
    gs = np.empty_like(v)
    for k in range(H - 1, -1, -1):
        dz = lam * _sigmoid(beta * z[:, k])
        gv[:, k] = -dz / s_eff[:, k] + 2 * problem.gamma_u * (v[:, k] - Lu[:, 0])
        gs[:, k] = dz * v[:, k] / s_eff[:, k] ** 2
        lam = 2 * problem.gamma_x * (x[:, k] - Lx[:, 0]) + dz
    return cost, gv, gs, x


def _plan_streaming(problem, x0, s_hat, warm, gtol=1e-6, max_iter=2000):
    n, H = s_hat.shape
    s_eff = np.maximum(s_hat, problem.throughput_floor)
    v0 = np.broadcast_to(problem.L_u[:, None], (n, H)).copy() if warm is None else np.array(warm, float)
    lo = np.broadcast_to(problem.u_min[:, None], (n, H)).ravel()
    hi = np.broadcast_to(problem.u_max[:, None], (n, H)).ravel()
    v0 = np.clip(v0.ravel(), lo, hi)

    def fun(flat):
        c, gv, _, _ = _streaming_grad(problem, x0, s_eff, flat.reshape(n, H))
        return c, gv.ravel()

    bounds = list(zip(np.where(np.isfinite(lo), lo, None), np.where(np.isfinite(hi), hi, None)))
    sol = optimize.minimize(fun, v0, jac=True, method="L-BFGS-B", bounds=bounds,
                            options={"gtol": gtol, "ftol": 1e-15, "maxiter": max_iter, "maxcor": 20})
    v = sol.x.reshape(n, H)
    cost, gv, _, x = _streaming_grad(problem, x0, s_eff, v)
    lo2, hi2 = lo.reshape(n, H), hi.reshape(n, H)
    res = float(_natural_residual(v, gv, lo2, hi2).max())
    act = _classify(v, gv, lo2, hi2, 1.0 + np.max(np.abs(gv)))
    return PlanResult(v, x, float(cost), act, res, int(sol.nit), forecast=s_hat, x0=x0, problem=problem)


def streaming_step(problem, x, u, s, noise=None):
    """Exact streaming dynamics: ``[x - u / s]_+ + L_x + noise``."""
    nxt = np.maximum(x - u / s, 0.0) + problem.L_x
    if noise is not None:
        nxt = nxt + noise
    return nxt


def linear_step(problem, x, u, s):
    return x + u - problem.s_gain * s


def stage_state_cost(problem, x):
    """Per-column state cost for an (n, K) trajectory block."""
    x = np.asarray(x, float)
    if problem.kind == "nonlinear-streaming":
        return problem.gamma_x * np.sum((x - problem.L_x[:, None]) ** 2, axis=0)
    r = x - problem.setpoint[:, None]
    return (problem.gamma_e * np.sum(np.maximum(r, 0) ** 2, axis=0)
            + problem.gamma_s * np.sum(np.maximum(-r, 0) ** 2, axis=0))


def stage_control_cost(problem, u):
    u = np.asarray(u, float)
    if problem.kind == "nonlinear-streaming":
        return problem.gamma_u * np.sum((u - problem.L_u[:, None]) ** 2, axis=0)
    return problem.gamma_u * np.sum(u ** 2, axis=0)


def trajectory_cost(problem, x, u):
    """Total cost of a stored trajectory: states 0..T and controls 0..T-1."""
    return float(np.sum(stage_state_cost(problem, x)) + np.sum(stage_control_cost(problem, u)))


# ---------------------------------------------------------------- rollouts

@dataclass
class Rollout:
    x: np.ndarray  # n x (T+1)
    u_hat: np.ndarray  # m x T
    u_star: np.ndarray  # m x T, perfect-forecast first control at the visited states (or None)
    s_true: np.ndarray  # p x T
    s_hat: np.ndarray  # T x p x H, full decoded forecasts
    s_future: np.ndarray  # T x p x H, true windows
    stage_costs: np.ndarray  # length T+1
    plans: list = field(default=None, repr=False)

    @property
    def T(self):
        return self.u_hat.shape[1]

    @property
    def cost(self):
        return float(np.sum(self.stage_costs))


def lti_spec_for(problem, H=None):
    """Equivalent unconstrained input-driven LQR (valid when g_e = g_s and setpoint 0)."""
    n = problem.n
    H = problem.H if H is None else H
    g = problem.gamma_e
    return LtiSpec(np.eye(n), np.eye(n), -np.diag(problem.s_gain), g * np.eye(n),
                   problem.gamma_u * np.eye(n), H)


def lqr_mpc_reference(spec, x_t, s_forecast):
    """First control of the closed-form LQR plan (``s_forecast`` is p x H)."""
    s = np.asarray(s_forecast, float)
    u = optimal_control(build_prediction(spec), x_t, s.T.ravel())
    return u[: spec.m]


def rollout(problem, forecaster, series, T, W, x0=None, *, compute_star=True, horizon_mode="fixed",
            keep_plans=False, seed=None):
    """Closed-loop simulation driven by ``forecaster(history, future, t) -> p x H``.

    ``series`` is one ``p x L`` array with first column at ``t = -W+1``. The plant
    always evolves with the true ``s_t``. ``horizon_mode='shrinking'`` plans
    only up to ``T-1`` (used to compare against a single full-horizon plan).
    """
    from .timeseries import rollout_windows

    H = problem.H
    hist, fut = rollout_windows(series, T, W, H)
    n = problem.n
    x = np.empty((n, T + 1))
    x[:, 0] = problem.setpoint if x0 is None else x0
    u_hat = np.empty((n, T))
    u_star = np.empty((n, T)) if compute_star else None
    s_hat_all = np.empty((T, n, H))
    plans = [] if keep_plans else None
    rng = np.random.default_rng(seed) if problem.kind == "nonlinear-streaming" else None
    warm = warm_star = None
    for t in range(T):
        s_hat = np.asarray(forecaster(hist[t], fut[t], t), float)
        s_hat_all[t] = s_hat
        h = H if horizon_mode == "fixed" else min(H, T - t)
        res = plan(problem, x[:, t], s_hat[:, :h], warm=_shift(warm, h))
        warm = res.u_plan
        u_hat[:, t] = res.u_plan[:, 0]
        if keep_plans:
            plans.append(res)
        if compute_star:
            rs = plan(problem, x[:, t], fut[t][:, :h], warm=_shift(warm_star, h))
            warm_star = rs.u_plan
            u_star[:, t] = rs.u_plan[:, 0]
        s_t = fut[t][:, 0]
        if problem.kind == "linear":
            x[:, t + 1] = linear_step(problem, x[:, t], u_hat[:, t], s_t)
        else:
            noise = rng.normal(0.0, problem.noise_std, n) if problem.noise_std > 0 else None
            x[:, t + 1] = streaming_step(problem, x[:, t], u_hat[:, t], s_t, noise)
    stage = stage_state_cost(problem, x)
    stage[:T] += stage_control_cost(problem, u_hat)
    return Rollout(x, u_hat, u_star, fut[:, :, 0].T.copy(), s_hat_all, fut, stage, plans)


def _shift(prev, h):
    if prev is None:
        return None
    out = np.empty((prev.shape[0], h))
    k = min(h, prev.shape[1] - 1)
    out[:, :k] = prev[:, 1:1 + k]
    out[:, k:] = prev[:, -1:]
    return out


def perfect_forecaster(hist, fut, t):
    return fut


def zero_forecaster(hist, fut, t):
    return np.zeros_like(fut)


def rollout_to_csv(ro, path):
    """One row per step: x, u_hat, u_star, s, s_hat (first column), stage cost."""
    import csv

    n, T = ro.u_hat.shape
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t"] + [f"x{i}" for i in range(n)] + [f"u_hat{i}" for i in range(n)]
                   + [f"u_star{i}" for i in range(n)] + [f"s{i}" for i in range(n)]
                   + [f"s_hat{i}" for i in range(n)] + ["stage_cost"])
        for t in range(T + 1):
            if t < T:
                us = ro.u_star[:, t] if ro.u_star is not None else np.full(n, np.nan)
                row = [*ro.x[:, t], *ro.u_hat[:, t], *us, *ro.s_true[:, t], *ro.s_hat[t][:, 0]]
            else:
                row = [*ro.x[:, t]] + [float("nan")] * (4 * n)
            w.writerow([t] + [repr(float(v)) for v in row] + [repr(float(ro.stage_costs[t]))])


def rollout_from_csv(path):
    """Inverse of :func:`rollout_to_csv` for the per-step columns (no full forecasts)."""
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    n = (data.shape[1] - 2) // 5
    T = data.shape[0] - 1
    cols = lambda k: data[:, 1 + k * n: 1 + (k + 1) * n].T  # noqa: E731
    x = cols(0)
    s_hat_first = cols(4)[:, :T]
    s_hat = s_hat_first.T[:, :, None]
    return Rollout(x, cols(1)[:, :T], cols(2)[:, :T], cols(3)[:, :T], s_hat, None, data[:, -1])


def forecasts_to_csv(ro, path):
    """Full decoded forecasts and true windows, one row per step (time-major)."""
    import csv

    T, p, H = ro.s_hat.shape
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"p={p}", f"H={H}"])
        for t in range(T):
            w.writerow([repr(float(v)) for v in (*ro.s_hat[t].T.ravel(), *ro.s_future[t].T.ravel())])


def forecasts_from_csv(path):
    """Returns (s_hat, s_future), each T x p x H."""
    with open(path) as f:
        head = f.readline().strip().split(",")
    p, H = (int(h.split("=")[1]) for h in head)
    data = np.atleast_2d(np.genfromtxt(path, delimiter=",", skip_header=1))
    blocks = data.reshape(data.shape[0], 2, H, p).transpose(1, 0, 3, 2)
    return blocks[0], blocks[1]
