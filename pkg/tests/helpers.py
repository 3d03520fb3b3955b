"""Shared random-instance builders and independent oracles for the tests."""
import numpy as np

from codesign.lqr import LtiSpec, control_cost


def random_spd(rng, n, lo=0.5):
    G = rng.normal(size=(n, n))
    return G @ G.T / n + lo * np.eye(n)


def random_spec(rng, n=None, H=None, stable=True):
    n = n or int(rng.integers(1, 6))
    H = H or int(rng.integers(1, 21))
    A = rng.normal(size=(n, n))
    if stable:
        A *= 0.9 / max(np.abs(np.linalg.eigvals(A)).max(), 1e-9)
    return LtiSpec(A, rng.normal(size=(n, n)), rng.normal(size=(n, n)), random_spd(rng, n), random_spd(rng, n), H)


def quadratic_by_polarization(f, dim):
    """Recover f(u) = c + b'u + u'Pu from evaluations only."""
    c = f(np.zeros(dim))
    I = np.eye(dim)
    fi = np.array([f(I[i]) for i in range(dim)])
    P = np.empty((dim, dim))
    for i in range(dim):
        for j in range(i, dim):
            fij = f(I[i] + I[j]) if i != j else f(2 * I[i])
            P[i, j] = P[j, i] = (fij - fi[i] - fi[j] + c) / 2 if i != j else (fij - 2 * fi[i] + c) / 2
    b = fi - c - np.diag(P)
    return c, b, P


def conjugate_gradient(A, b, tol=1e-15, max_iter=None):
    x = np.zeros_like(b)
    r = b - A @ x
    d = r.copy()
    rs = r @ r
    for _ in range(max_iter or 10 * len(b)):
        if np.sqrt(rs) <= tol * max(1.0, np.linalg.norm(b)):
            break
        Ad = A @ d
        a = rs / (d @ Ad)
        x += a * d
        r -= a * Ad
        rs_new = r @ r
        d = r + (rs_new / rs) * d
        rs = rs_new
    return x


def cg_minimizer(spec, x0, s):
    """Minimizer of the simulated horizon cost, found by CG on its recovered quadratic."""
    _, b, P = quadratic_by_polarization(lambda u: control_cost(spec, x0, u, s), spec.m * spec.H)
    return conjugate_gradient(2 * P, -b)


def central_diff(f, x, h=1e-5):
    x = np.asarray(x, float)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        g[idx] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


# ---------------------------------------------------------------- split-QP oracle

def qp_cost(problem, x0, s_hat, u):
    """Cost of a plan by explicit simulation: asymmetric state penalty plus control energy."""
    n, H = s_hat.shape
    x = np.array(x0, float)
    total = 0.0
    for k in range(H + 1):
        r = x - problem.setpoint
        total += problem.gamma_e * np.sum(np.maximum(r, 0) ** 2) + problem.gamma_s * np.sum(np.maximum(-r, 0) ** 2)
        if k < H:
            total += problem.gamma_u * np.sum(u[:, k] ** 2)
            x = x + u[:, k] - problem.s_gain * s_hat[:, k]
    return total


def qp_oracle(problem, x0, s_hat, iters=20000):
    """Accelerated projected gradient on the explicit lower-triangular form.

    For each dimension the deviations are ``r = a + G (u - c s)`` with ``G`` the
    lower-triangular ones matrix, so the objective is piecewise quadratic in ``u``.
    """
    n, H = s_hat.shape
    G = np.tril(np.ones((H, H)))
    u_out = np.zeros((n, H))
    for i in range(n):
        a = x0[i] - problem.setpoint[i]
        c = problem.s_gain[i] * s_hat[i]
        lo, hi = problem.u_min[i], problem.u_max[i]
        gmax = max(problem.gamma_e, problem.gamma_s)
        lip = 2 * (gmax * np.linalg.norm(G, 2) ** 2 + problem.gamma_u)
        mu = 2 * problem.gamma_u
        q = (np.sqrt(lip) - np.sqrt(mu)) / (np.sqrt(lip) + np.sqrt(mu))

        def grad(u):
            r = a + G @ (u - c)
            w = np.where(r > 0, problem.gamma_e, problem.gamma_s)
            return 2 * G.T @ (w * r) + 2 * problem.gamma_u * u

        u = np.clip(np.zeros(H), lo, hi)
        y = u.copy()
        for _ in range(iters):
            u_new = np.clip(y - grad(y) / lip, lo, hi)
            y = u_new + q * (u_new - u)
            u = u_new
            # stop on the fixed-point residual at u itself; a clipped step from y can
            # repeat u while u is not yet stationary
            if np.max(np.abs(np.clip(u - grad(u) / lip, lo, hi) - u)) < 1e-15:
                break
        u_out[i] = u
    return u_out


def grid_oracle_1d(problem, x0, s0, lo=-5.0, hi=5.0, step=1e-4):
    grid = np.arange(max(lo, problem.u_min[0]), min(hi, problem.u_max[0]) + step / 2, step)
    r1 = x0 - problem.setpoint[0] + grid - problem.s_gain[0] * s0
    r0 = x0 - problem.setpoint[0]
    pen = lambda r: problem.gamma_e * np.maximum(r, 0) ** 2 + problem.gamma_s * np.maximum(-r, 0) ** 2  # noqa: E731
    cost = pen(r0) + pen(r1) + problem.gamma_u * grid**2
    return grid[np.argmin(cost)]


def random_qp(rng, n=None, H=None):
    from codesign.mpc import MpcProblem

    n = n or int(rng.integers(1, 4))
    H = H or int(rng.integers(1, 7))
    bound = rng.uniform(0.2, 2.0, size=n)
    pr = MpcProblem(n, H, setpoint=rng.normal(size=n), gamma_e=rng.uniform(0.2, 5), gamma_s=rng.uniform(0.2, 5),
                    gamma_u=rng.uniform(0.2, 3), u_min=-bound * rng.uniform(0.3, 1.5, size=n), u_max=bound,
                    s_gain=rng.uniform(0.5, 2.0, size=n))
    return pr, rng.normal(size=n) * 2, rng.normal(size=(n, H)) * 1.5


def vjp_probe(problem, x0, s_hat, upstream, h=1e-5):
    """Compare the implicit VJP with central differences of <upstream, u_plan(s_hat)>.

    Returns (relative error, stable) where ``stable`` is False when the active
    set or the sign pattern of the predicted deviations changes under the
    perturbations used by the finite differences.
    """
    from codesign.diffmpc import QpJacobianContext, qp_plan_vjp
    from codesign.mpc import plan

    res = plan(problem, x0, s_hat)
    ctx = QpJacobianContext.from_plan(res)
    g, _ = qp_plan_vjp(ctx, upstream)
    fd = np.zeros_like(s_hat)
    stable = True
    sign0 = np.sign(res.x_pred - problem.setpoint[:, None])
    for idx in np.ndindex(s_hat.shape):
        vals = []
        for d in (h, -h):
            s = s_hat.copy()
            s[idx] += d
            r = plan(problem, x0, s)
            vals.append(np.sum(upstream * r.u_plan))
            if not np.array_equal(r.active_set, res.active_set) or not np.array_equal(
                    np.sign(r.x_pred - problem.setpoint[:, None]), sign0):
                stable = False
        fd[idx] = (vals[0] - vals[1]) / (2 * h)
    err = np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12)
    if np.linalg.norm(fd) < 1e-12 and np.linalg.norm(g) < 1e-12:
        err = 0.0
    return float(err), stable
