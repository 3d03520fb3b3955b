"""Optimal rank-``Z`` linear codecs under a quadratic error weight.

The weighted objective ``sum_i (S_hat_i - S_i)' W (S_hat_i - S_i)`` with
``W = Y diag(lam) Y'`` becomes a plain Frobenius low-rank problem after the
change of variables ``X = diag(lam)^{1/2} Y' S``, solved by truncated SVD.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, IllConditionedError

RIDGE_REL = 1e-10
COND_LIMIT = 1e12


@dataclass(frozen=True)
class LinearCodec:
    E: np.ndarray  # Z x pH
    D: np.ndarray  # pH x Z
    Y: np.ndarray  # eigenvectors of the weight
    lam: np.ndarray  # eigenvalues of the weight
    singular_values: np.ndarray  # full spectrum of the transformed samples
    mean: np.ndarray = None  # set only for centered codecs

    @property
    def Z(self):
        return self.E.shape[0]

    @property
    def size(self):
        return self.E.shape[1]

    @property
    def weight(self):
        return (self.Y * self.lam) @ self.Y.T

    @property
    def tail_objective(self):
        """Weighted error achieved on the fitting samples: sum of discarded sigma^2."""
        return float(np.sum(self.singular_values[self.Z:] ** 2))

    def encode(self, s):
        s = np.asarray(s, float)
        if s.shape[0] != self.size:
            raise DimensionError(f"expected leading dimension {self.size}, got {s.shape[0]}")
        if self.mean is not None:
            s = s - (self.mean if s.ndim == 1 else self.mean[:, None])
        return self.E @ s

    def decode(self, phi):
        phi = np.asarray(phi, float)
        if phi.shape[0] != self.Z:
            raise DimensionError(f"expected leading dimension {self.Z}, got {phi.shape[0]}")
        out = self.D @ phi
        if self.mean is not None:
            out = out + (self.mean if out.ndim == 1 else self.mean[:, None])
        return out

    def reconstruct(self, S):
        return self.decode(self.encode(S))


def _orient(U):
    """Flip columns so each one's largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def _fit(Y, lam, S, Z, center):
    S = np.asarray(S, float)
    if S.ndim != 2 or S.shape[1] < 1:
        raise DimensionError("S must be a (pH, N) matrix with N >= 1")
    n = S.shape[0]
    if not 1 <= Z <= n:
        raise DimensionError(f"bottleneck Z={Z} must lie in 1..{n}")
    mean = None
    if center:
        mean = S.mean(axis=1)
        S = S - mean[:, None]
    root = np.sqrt(lam)
    T = root[:, None] * Y.T  # Lambda^{1/2} Y'
    U, sig, _ = np.linalg.svd(T @ S, full_matrices=True)
    sig_full = np.zeros(n)
    sig_full[: len(sig)] = sig
    Uz = _orient(U[:, :Z])
    E = Uz.T @ T
    D = (Y / root) @ Uz  # (Lambda^{1/2} Y')^{-1} = Y Lambda^{-1/2}
    return LinearCodec(E, D, Y, lam, sig_full, mean)


def weight_eigs(Psi, lambda_f):
    """Eigendecomposition of ``Psi + lambda_f I`` with the degenerate-task guard."""
    Psi = np.asarray(Psi, float)
    if Psi.ndim != 2 or Psi.shape[0] != Psi.shape[1]:
        raise DimensionError("Psi must be square")
    if lambda_f < 0:
        raise ValueError("lambda_f must be >= 0")
    n = Psi.shape[0]
    Wt = 0.5 * (Psi + Psi.T) + lambda_f * np.eye(n)
    lam, Y = np.linalg.eigh(Wt)
    top = max(lam.max(), 0.0)
    if top <= 0:
        if lambda_f == 0 and np.allclose(Psi, 0):
            raise IllConditionedError("weight matrix is zero")
        raise IllConditionedError("weight matrix is not positive semi-definite")
    if lam.min() < -1e-8 * top:
        raise IllConditionedError(f"weight matrix has negative eigenvalue {lam.min():.3g}")
    if lam.min() <= top / COND_LIMIT:
        if lambda_f > 0:
            raise IllConditionedError("Psi + lambda I is numerically singular")
        eps = RIDGE_REL * np.trace(Wt) / n
        warnings.warn(f"Psi is rank-deficient; adding ridge {eps:.3g} to keep the codec invertible",
                      RuntimeWarning, stacklevel=3)
        lam, Y = np.linalg.eigh(Wt + eps * np.eye(n))
    return Y, lam


def fit_task_aware(Psi, lambda_f, S, Z, center=False):
    Y, lam = weight_eigs(Psi, lambda_f)
    return _fit(Y, lam, S, Z, center)


def fit_task_agnostic(S, Z, center=False):
    """Plain truncated SVD of ``S`` (PCA without centering by default)."""
    n = np.asarray(S).shape[0]
    return _fit(np.eye(n), np.ones(n), S, Z, center)


def weighted_objective(S_hat, S, weight):
    R = np.asarray(S_hat, float) - np.asarray(S, float)
    return float(np.einsum("in,ij,jn->", R, weight, R))


def codec_bundle(codec):
    out = {"E": codec.E, "D": codec.D, "Y": codec.Y, "lam": codec.lam[None, :],
           "singular_values": codec.singular_values[None, :]}
    if codec.mean is not None:
        out["mean"] = codec.mean[None, :]
    return out


def codec_from_bundle(mats):
    mean = mats["mean"][0] if "mean" in mats else None
    return LinearCodec(mats["E"], mats["D"], mats["Y"], mats["lam"][0], mats["singular_values"][0], mean)
