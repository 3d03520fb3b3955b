"""Implicit differentiation of MPC plans and the co-design training losses.

At a plan with fixed active set, the free controls satisfy ``grad_u f = 0``.
With ``Huu``, ``Hus``, ``Hux`` the derivatives of that gradient with respect to
controls, forecast and initial state, the implicit function theorem gives
``du_F = -Huu_FF^{-1} (Hus_F ds + Hux_F dx)``; bound-active controls do not move.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError
from .mpc import _hessian, _streaming_grad, perfect_forecaster, rollout


@dataclass
class QpJacobianContext:
    free: np.ndarray  # n x H bool
    Huu: np.ndarray  # n x H x H
    Hus: np.ndarray  # n x H x H
    Hux: np.ndarray  # n x H
    degenerate: bool = False

    @classmethod
    def from_plan(cls, res):
        pr = res.problem
        if pr.kind == "linear":
            return _linear_context(res)
        return _streaming_context(res)


def _linear_context(res):
    pr = res.problem
    w = res.weights
    Huu = _hessian(pr, w)
    H = w.shape[1]
    c = pr.s_gain[:, None, None]
    Hus = -c * (Huu - 2.0 * pr.gamma_u * np.eye(H))
    Hux = 2.0 * np.cumsum(w[:, ::-1], axis=1)[:, ::-1]
    free = res.active_set == 0
    r = res.x_pred[:, 1:] - pr.setpoint[:, None]
    degenerate = _at_bound_free(res) or (pr.gamma_e != pr.gamma_s and bool(np.any(r == 0.0)))
    return QpJacobianContext(free, Huu, Hus, Hux, degenerate)


def _at_bound_free(res):
    pr = res.problem
    v = res.u_plan
    tol = 1e-10 * (1.0 + np.abs(v))
    at = (np.abs(v - pr.u_min[:, None]) <= tol) | (np.abs(pr.u_max[:, None] - v) <= tol)
    return bool(np.any(at & (res.active_set == 0)))


def _streaming_context(res, h=1e-6):
    """Second derivatives of the smoothed plan by central differences of the
    analytic gradient. Dimensions are decoupled, so one perturbation per time
    index serves all dimensions at once."""
    pr = res.problem
    v = res.u_plan
    x0 = res.x0
    s = np.maximum(res.forecast, pr.throughput_floor)
    n, H = v.shape
    Huu = np.empty((n, H, H))
    Hus = np.empty((n, H, H))
    for j in range(H):
        dv = np.zeros_like(v)
        dv[:, j] = h
        gp = _streaming_grad(pr, x0, s, v + dv)[1]
        gm = _streaming_grad(pr, x0, s, v - dv)[1]
        Huu[:, :, j] = (gp - gm) / (2 * h)
        hs = h * np.maximum(1.0, np.abs(s[:, j]))
        ds = np.zeros_like(s)
        ds[:, j] = hs
        gp = _streaming_grad(pr, x0, s + ds, v)[1]
        gm = _streaming_grad(pr, x0, s - ds, v)[1]
        Hus[:, :, j] = (gp - gm) / (2 * hs[:, None])
    Huu = 0.5 * (Huu + np.swapaxes(Huu, 1, 2))
    # floored forecast entries do not influence the plan
    Hus = Hus * (res.forecast > pr.throughput_floor)[:, None, :]
    gp = _streaming_grad(pr, x0 + h, s, v)[1]
    gm = _streaming_grad(pr, x0 - h, s, v)[1]
    Hux = (gp - gm) / (2 * h)
    return QpJacobianContext(res.active_set == 0, Huu, Hus, Hux, _at_bound_free(res))


def qp_plan_vjp(ctx, upstream):
    """Pull a gradient on the plan (n x H) back to the forecast (n x H) and x_t (n,)."""
    upstream = np.asarray(upstream, float)
    if ctx.degenerate:
        warnings.warn("degenerate active set: treating weakly active coordinates as free",
                      RuntimeWarning, stacklevel=2)
    free = ctx.free
    H = free.shape[1]
    mask = free[:, :, None] & free[:, None, :]
    Hr = np.where(mask, ctx.Huu, np.eye(H))
    z = np.linalg.solve(Hr, np.where(free, upstream, 0.0)[..., None])[..., 0]
    z = np.where(free, z, 0.0)
    g_s = -np.einsum("nkj,nk->nj", ctx.Hus, z)
    g_x = -np.sum(ctx.Hux * z, axis=1)
    return g_s, g_x


def plan_jacobian(ctx):
    """Dense Jacobian d u_plan / d forecast per dimension: (n, H, H)."""
    free = ctx.free
    n, H = free.shape
    J = np.zeros((n, H, H))
    for i in range(n):
        F = np.flatnonzero(free[i])
        if F.size:
            J[i][np.ix_(F, np.arange(H))] = -np.linalg.solve(ctx.Huu[i][np.ix_(F, F)], ctx.Hus[i][F])
    return J


# ---------------------------------------------------------------- rollout op

@dataclass
class DiffRollout:
    """Tape-side view of one training rollout."""

    u_hat: ad.Var  # n x T, enacted controls
    s_hat: ad.Var  # pH x T, scaled decoded forecasts
    s_true: np.ndarray  # pH x T, scaled true future windows
    rollout: object
    problem: object
    x0: np.ndarray
    baseline_cost: float = None


def flat_to_blocks(flat, p):
    """(pH, T) time-major columns -> (T, p, H)."""
    pH, T = flat.shape
    return flat.T.reshape(T, pH // p, p).transpose(0, 2, 1)


def blocks_to_flat(blocks):
    T, p, H = blocks.shape
    return blocks.transpose(0, 2, 1).reshape(T, p * H).T


def mpc_rollout_op(problem, s_hat_phys, series, T, W, x0, *, unroll=False, compute_star=True, seed=None):
    """Closed-loop rollout as a tape op from physical forecasts (pH x T) to controls (n x T).

    With ``unroll=False`` each plan is differentiated with its start state held
    fixed; ``unroll=True`` also follows how earlier controls move later states.
    """
    if unroll and problem.kind != "linear":
        raise ConfigError("full unroll needs the exact dynamics' derivative; only linear scenarios support it")
    blocks = flat_to_blocks(s_hat_phys.value, problem.p)
    ro = rollout(problem, lambda h, f, t: blocks[t], series, T, W, x0,
                 compute_star=compute_star, keep_plans=True, seed=seed)
    ctxs = [None] * T

    def vjp(g):
        grad_blocks = np.zeros_like(blocks)
        acc = np.zeros(problem.n)
        for t in range(T - 1, -1, -1):
            if ctxs[t] is None:
                ctxs[t] = QpJacobianContext.from_plan(ro.plans[t])
            up = np.zeros_like(ro.plans[t].u_plan)
            up[:, 0] = g[:, t] + acc
            g_s, g_x = qp_plan_vjp(ctxs[t], up)
            grad_blocks[t][:, : g_s.shape[1]] = g_s
            if unroll:
                # x_t = x_0 + sum_{j<t} u_j - ..., so d x_t / d u_j = I for j < t
                acc = acc + g_x
        return (blocks_to_flat(grad_blocks),)

    u = s_hat_phys.tape.custom(ro.u_hat, (s_hat_phys,), vjp, name="mpc_rollout")
    return u, ro


def state_trajectory(problem, u, s_true_first, x0):
    """x (n x T+1) as a tape function of enacted controls for the linear dynamics."""
    if problem.kind != "linear":
        raise ConfigError("the exact streaming dynamics are not differentiated; use the surrogate loss")
    drift = u - problem.s_gain[:, None] * s_true_first
    x_rest = ad.cumsum(drift, axis=1) + x0[:, None]
    return ad.concat([x0[:, None], x_rest], axis=1)


def control_cost_var(problem, x, u):
    r = x - problem.setpoint[:, None]
    cost = problem.gamma_u * ad.sqnorm(u)
    if problem.gamma_e:
        cost = cost + problem.gamma_e * ad.sqnorm(ad.relu(r))
    if problem.gamma_s:
        cost = cost + problem.gamma_s * ad.sqnorm(ad.relu(-r))
    return cost


def _forecast_error_term(dr):
    p = dr.problem.p
    return ad.sqnorm(dr.s_hat[:p] - dr.s_true[:p])


def perfect_cost(problem, series, T, W, x0):
    return rollout(problem, perfect_forecaster, series, T, W, x0, compute_star=False).cost


def loss_total(dr, lambda_f, series=None, W=None):
    """(1/T)(J(u_hat) - J(u)) + lambda (1/T) sum_t |s_t - s_hat_t|^2 as a tape node.

    ``J(u)`` is the cost of the perfect-forecast rollout from the same x0; it is
    a constant for training and is computed on demand when ``series`` is given.
    """
    if dr.rollout.u_star is None and dr.baseline_cost is None:
        raise ValueError("rollout carries neither u_star nor a baseline cost")
    T = dr.u_hat.shape[1]
    if dr.baseline_cost is None:
        if series is None:
            raise ValueError("baseline cost missing: pass the series to compute it")
        dr.baseline_cost = perfect_cost(dr.problem, series, T, W, dr.x0)
    x = state_trajectory(dr.problem, dr.u_hat, dr.rollout.s_true, dr.x0)
    j = control_cost_var(dr.problem, x, dr.u_hat)
    loss = (j - dr.baseline_cost) * (1.0 / T)
    if lambda_f:
        loss = loss + (lambda_f / T) * _forecast_error_term(dr)
    return loss


def loss_surrogate(dr, lambda_f):
    """(1/T)(sum_t |u_hat_t - u_t|^2 + lambda |s_hat_t - s_t|^2)."""
    if dr.rollout.u_star is None:
        raise ValueError("surrogate loss needs u_star from the perfect-forecast controller")
    T = dr.u_hat.shape[1]
    loss = ad.sqnorm(dr.u_hat - dr.rollout.u_star) * (1.0 / T)
    if lambda_f:
        loss = loss + (lambda_f / T) * _forecast_error_term(dr)
    return loss
