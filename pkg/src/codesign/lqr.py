"""Closed-form input-driven LQR over a finite horizon.

Dynamics ``x_{t+1} = A x_t + B u_t + C s_t`` and cost
``sum_{t=0}^{H} x_t' Q x_t + sum_{t=0}^{H-1} u_t' R u_t``. Stacking the
horizon, each state is affine in the stacked controls ``u`` and exogenous
inputs ``s`` (both time-major), so the cost is a quadratic in ``u`` with
Hessian ``K``, and the forecast-error penalty is the quadratic form ``Psi``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DimensionError, IllConditionedError

COND_LIMIT = 1e12


def _sym_pd(M, name):
    if not np.allclose(M, M.T, rtol=1e-10, atol=1e-12):
        raise DimensionError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(M).min() <= 0:
        raise DimensionError(f"{name} must be positive definite")


@dataclass(frozen=True)
class LtiSpec:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    H: int

    def __post_init__(self):
        for name in "ABCQR":
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), float)))
        n, m, p = self.n, self.m, self.p
        if self.A.shape != (n, n) or self.B.shape[0] != n or self.C.shape[0] != n:
            raise DimensionError("A must be n x n and B, C must have n rows")
        if self.Q.shape != (n, n) or self.R.shape != (m, m):
            raise DimensionError("Q must be n x n and R must be m x m")
        if self.H < 1:
            raise DimensionError("horizon H must be >= 1")
        _sym_pd(self.Q, "Q")
        _sym_pd(self.R, "R")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[1]


@dataclass(frozen=True)
class CodesignForms:
    spec: LtiSpec
    M: list  # M[i]: n x mH, x_{i+1} = A^{i+1} x0 + M[i] u + N[i] s
    N: list  # N[i]: n x pH
    A_pow: list  # A_pow[i] = A^{i+1}
    K: np.ndarray
    L: np.ndarray
    Psi: np.ndarray
    K_chol: tuple  # scipy cho_factor output

    @property
    def H(self):
        return self.spec.H

    def k_vector(self, x0, s_flat):
        """Linear term of the cost in ``u``: sum_i M_i' Q (A^{i+1} x0 + N_i s)."""
        Q = self.spec.Q
        k = np.zeros(self.K.shape[0])
        for Mi, Ni, Ai in zip(self.M, self.N, self.A_pow):
            k += Mi.T @ (Q @ (Ai @ x0 + Ni @ s_flat))
        return k


def build_prediction(spec):
    n, m, p, H = spec.n, spec.m, spec.p, spec.H
    # blocks[j] = A^j B and A^j C, grown incrementally
    AB = [spec.B]
    AC = [spec.C]
    A_pow = [spec.A.copy()]
    for _ in range(1, H):
        AB.append(spec.A @ AB[-1])
        AC.append(spec.A @ AC[-1])
        A_pow.append(spec.A @ A_pow[-1])
    M, N = [], []
    for i in range(H):
        Mi = np.zeros((n, m * H))
        Ni = np.zeros((n, p * H))
        for j in range(i + 1):
            Mi[:, j * m:(j + 1) * m] = AB[i - j]
            Ni[:, j * p:(j + 1) * p] = AC[i - j]
        M.append(Mi)
        N.append(Ni)
    K = np.kron(np.eye(H), spec.R)
    L = np.zeros((m * H, p * H))
    for Mi, Ni in zip(M, N):
        QM = spec.Q @ Mi
        K += Mi.T @ QM
        L += QM.T @ Ni
    K = 0.5 * (K + K.T)
    cond = np.linalg.cond(K)
    if not cond < COND_LIMIT:
        raise IllConditionedError(f"K has condition number {cond:.3g} > {COND_LIMIT:g}")
    cf = linalg.cho_factor(K, lower=True)
    Wm = linalg.solve_triangular(cf[0], L, lower=True)  # K = Lc Lc', Wm = Lc^{-1} L
    Psi = Wm.T @ Wm
    return CodesignForms(spec, M, N, A_pow, K, L, Psi, cf)


def _check(vec, size, name):
    vec = np.asarray(vec, float).ravel()
    if vec.shape[0] != size:
        raise DimensionError(f"{name} has length {vec.shape[0]}, expected {size}")
    return vec


def optimal_control(forms, x0, s_flat):
    """Minimizer ``u* = -K^{-1} k(x0, s)`` of the horizon cost (length mH)."""
    spec = forms.spec
    x0 = _check(x0, spec.n, "x0")
    s_flat = _check(s_flat, spec.p * spec.H, "s")
    return -linalg.cho_solve(forms.K_chol, forms.k_vector(x0, s_flat))


def optimal_controls(forms, x0, S):
    """Column-wise ``optimal_control`` for a pH x N matrix of inputs."""
    spec = forms.spec
    x0 = _check(x0, spec.n, "x0")
    S = np.asarray(S, float).reshape(spec.p * spec.H, -1)
    Q = spec.Q
    k = np.zeros((forms.K.shape[0], S.shape[1]))
    for Mi, Ni, Ai in zip(forms.M, forms.N, forms.A_pow):
        k += Mi.T @ (Q @ ((Ai @ x0)[:, None] + Ni @ S))
    return -linalg.cho_solve(forms.K_chol, k)


def control_sensitivity(forms, s_hat_flat, s_flat):
    """Control deviation and extra cost caused by using ``s_hat`` instead of ``s``."""
    size = forms.spec.p * forms.H
    e = _check(s_hat_flat, size, "s_hat") - _check(s_flat, size, "s")
    du = -linalg.cho_solve(forms.K_chol, forms.L @ e)
    extra = max(float(e @ forms.Psi @ e), 0.0)
    return du, extra


def total_cost_quadratic(forms, lambda_f, s_hat_flat, s_flat):
    if lambda_f < 0:
        raise ValueError("lambda_f must be >= 0")
    size = forms.spec.p * forms.H
    e = _check(s_hat_flat, size, "s_hat") - _check(s_flat, size, "s")
    return float(e @ (forms.Psi @ e) + lambda_f * (e @ e)) / forms.H


def simulate(spec, x0, u_flat, s_flat):
    """Roll the dynamics forward; returns states (H+1, n)."""
    n, m, p, H = spec.n, spec.m, spec.p, spec.H
    u = np.asarray(u_flat, float).reshape(H, m)
    s = np.asarray(s_flat, float).reshape(H, p)
    x = np.empty((H + 1, n))
    x[0] = x0
    for t in range(H):
        x[t + 1] = spec.A @ x[t] + spec.B @ u[t] + spec.C @ s[t]
    return x


def control_cost(spec, x0, u_flat, s_flat):
    """Horizon cost evaluated by explicit simulation (includes the x0 term)."""
    x = simulate(spec, x0, u_flat, s_flat)
    u = np.asarray(u_flat, float).reshape(spec.H, spec.m)
    return float(np.einsum("ti,ij,tj->", x, spec.Q, x) + np.einsum("ti,ij,tj->", u, spec.R, u))


def control_costs(spec, x0, U, S):
    """Column-wise ``control_cost``: U is mH x N, S is pH x N."""
    n, m, p, H = spec.n, spec.m, spec.p, spec.H
    U = np.asarray(U, float).reshape(H, m, -1)
    S = np.asarray(S, float).reshape(H, p, -1)
    x = np.repeat(np.asarray(x0, float).reshape(n, 1), U.shape[2], axis=1)
    cost = np.einsum("in,ij,jn->n", x, spec.Q, x)
    for t in range(H):
        x = spec.A @ x + spec.B @ U[t] + spec.C @ S[t]
        cost += np.einsum("in,ij,jn->n", x, spec.Q, x) + np.einsum("in,ij,jn->n", U[t], spec.R, U[t])
    return cost


# ---------------------------------------------------------------- bundles

def forms_bundle(forms):
    """Named matrices for :func:`codesign.bundle.save_bundle`."""
    out = {"K": forms.K, "L": forms.L, "Psi": forms.Psi}
    spec = forms.spec
    out.update(A=spec.A, B=spec.B, C=spec.C, Q=spec.Q, R=spec.R, H=np.array([[spec.H]], float))
    return out


def forms_from_bundle(mats):
    spec = LtiSpec(mats["A"], mats["B"], mats["C"], mats["Q"], mats["R"], int(mats["H"][0, 0]))
    return build_prediction(spec)
