"""Continuous-discrete EKF time update.

Between measurements the mean and covariance follow the moment ODEs

    d xhat / dt = f(t, xhat)
    d P    / dt = F P + P F.T + G Q G.T,     F = df/dx at xhat,

integrated adaptively after flattening ``[xhat | P]`` into one vector.
The square-root variant propagates the lower Cholesky factor S instead,

    d S / dt = S * Phi(A + A.T + B),   A = S^{-1} F S,  B = S^{-1} G Q G.T S^{-T},

where Phi keeps the strict lower triangle plus half the diagonal.  A and B
are formed with triangular solves, never explicit inverses.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

import scipy.linalg

from .exceptions import LengthMismatch, SingularTriangular
from .linalg import cholesky_lower
from .ode import RightHandSide, Tolerances, integrate_adaptive

__all__ = [
    "ProcessModel",
    "GaussianBelief",
    "SqrtGaussianBelief",
    "pack_belief",
    "unpack_belief",
    "mde_rhs",
    "sqrt_mde_rhs",
    "tu_ekf",
    "tu_ekf_sqrt",
    "finite_difference_jacobian",
]

Drift = Callable[[float, np.ndarray], np.ndarray]
Jacobian = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ProcessModel:
    """Continuous-time dynamics ``dx = f(t, x) dt + G dbeta``.

    ``diffusion`` is the constant n-by-q gain G and ``diffusion_cov`` the
    q-by-q increment covariance Q.  ``jacobian`` may be omitted; a central
    finite-difference fallback is used then.
    """

    n: int
    q: int
    drift: Drift
    diffusion: np.ndarray
    diffusion_cov: np.ndarray
    jacobian: Jacobian | None = None
    name: str = ""

    def jacobian_at(self, t: float, x: np.ndarray) -> np.ndarray:
        if self.jacobian is not None:
            return self.jacobian(t, x)
        return finite_difference_jacobian(self.drift, t, x)

    def process_noise(self) -> np.ndarray:
        g = np.asarray(self.diffusion, dtype=float)
        return g @ np.asarray(self.diffusion_cov, dtype=float) @ g.T


def finite_difference_jacobian(f: Drift, t: float, x: np.ndarray) -> np.ndarray:
    """Central differences with step ``sqrt(eps) * max(1, |x_i|)`` per column."""
    x = np.asarray(x, dtype=float)
    base = np.sqrt(np.finfo(float).eps)
    cols = []
    for i in range(x.size):
        h = base * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        cols.append((f(t, xp) - f(t, xm)) / (2.0 * h))
    return np.column_stack(cols)


@dataclass
class GaussianBelief:
    """State mean with full covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=float).ravel()
        self.cov = np.asarray(self.cov, dtype=float)
        n = self.mean.size
        if self.cov.shape != (n, n):
            raise LengthMismatch(
                f"covariance shape {self.cov.shape} does not match mean size {n}"
            )

    @property
    def n(self) -> int:
        return self.mean.size


@dataclass
class SqrtGaussianBelief:
    """State mean with lower-triangular covariance factor."""

    mean: np.ndarray
    sqrt_cov: np.ndarray

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=float).ravel()
        self.sqrt_cov = np.asarray(self.sqrt_cov, dtype=float)
        n = self.mean.size
        if self.sqrt_cov.shape != (n, n):
            raise LengthMismatch(
                f"factor shape {self.sqrt_cov.shape} does not match mean size {n}"
            )

    @property
    def n(self) -> int:
        return self.mean.size

    def cov(self) -> np.ndarray:
        return self.sqrt_cov @ self.sqrt_cov.T


def pack_belief(belief: GaussianBelief | SqrtGaussianBelief) -> np.ndarray:
    """Column-stack ``[mean | matrix]`` into a flat vector of length n(n+1)."""
    mat = belief.cov if isinstance(belief, GaussianBelief) else belief.sqrt_cov
    return np.concatenate([belief.mean, mat.ravel(order="F")])


def unpack_belief(vec: np.ndarray, n: int,
                  sqrt: bool = False) -> GaussianBelief | SqrtGaussianBelief:
    """Inverse of :func:`pack_belief`; exact round trip."""
    vec = np.asarray(vec, dtype=float).ravel()
    if vec.size != n * (n + 1):
        raise LengthMismatch(f"expected length {n * (n + 1)}, got {vec.size}")
    mean = vec[:n].copy()
    mat = vec[n:].reshape((n, n), order="F").copy()
    if sqrt:
        return SqrtGaussianBelief(mean, mat)
    return GaussianBelief(mean, mat)


def _split(vec: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    return vec[:n], vec[n:].reshape((n, n), order="F")


def mde_rhs(model: ProcessModel) -> RightHandSide:
    """Right-hand side of the flattened moment ODEs for ``model``."""
    n = model.n
    gqg = model.process_noise()

    def rhs(t: float, vec: np.ndarray) -> np.ndarray:
        x, p = _split(vec, n)
        jac = model.jacobian_at(t, x)
        dp = jac @ p + p @ jac.T
        dp += gqg
        out = np.empty(n * (n + 1))
        out[:n] = model.drift(t, x)
        out[n:] = dp.ravel(order="F")
        return out

    return rhs


def sqrt_mde_rhs(model: ProcessModel) -> RightHandSide:
    """Right-hand side of the flattened Cholesky-factor moment ODEs.

    Hot path of the square-root time update: triangular solves go straight
    to LAPACK and the Phi projection is a cached elementwise mask (strict
    lower kept, diagonal halved, upper zeroed -- identical arithmetic to
    :func:`cdkalman.linalg.phi_map`).
    """
    n = model.n
    gqg = model.process_noise()
    phi_mask = np.tril(np.ones((n, n))) - 0.5 * np.eye(n)
    trtrs = scipy.linalg.get_lapack_funcs("trtrs", (gqg,))

    def solve_lower(s: np.ndarray, rhs_mat: np.ndarray, trans: int) -> np.ndarray:
        out, info = trtrs(s, rhs_mat, lower=1, trans=trans)
        if info != 0:
            raise SingularTriangular(f"trtrs failed with info={info}")
        return out

    def rhs(t: float, vec: np.ndarray) -> np.ndarray:
        x, s = _split(vec, n)
        jac = model.jacobian_at(t, x)
        # one stacked solve: S^{-1} [F S | G Q G.T]
        stacked = np.empty((n, 2 * n))
        stacked[:, :n] = jac @ s
        stacked[:, n:] = gqg
        left = solve_lower(s, stacked, 0)
        a = left[:, :n]
        b = solve_lower(s, left[:, n:].T, 0).T       # (S^{-1} GQG') S^{-T}
        ds = s @ ((a + a.T + b) * phi_mask)
        out = np.empty(n * (n + 1))
        out[:n] = model.drift(t, x)
        out[n:] = ds.ravel(order="F")
        return out

    return rhs


def tu_ekf(belief: GaussianBelief, model: ProcessModel,
           t_span: tuple[float, float], tol: Tolerances) -> GaussianBelief:
    """Predict ``(mean, P)`` over ``t_span``; P is symmetrized afterwards."""
    t0, t1 = t_span
    if t1 == t0:
        return GaussianBelief(belief.mean.copy(), belief.cov.copy())
    out, _ = integrate_adaptive(mde_rhs(model), t_span, pack_belief(belief), tol)
    predicted = unpack_belief(out, model.n)
    predicted.cov = 0.5 * (predicted.cov + predicted.cov.T)
    return predicted


def tu_ekf_sqrt(belief: SqrtGaussianBelief, model: ProcessModel,
                t_span: tuple[float, float], tol: Tolerances) -> SqrtGaussianBelief:
    """Predict ``(mean, S)`` over ``t_span`` via the factor ODE.

    The flow keeps S exactly lower triangular but does not structurally
    enforce a positive diagonal; if any diagonal entry comes back
    non-positive the factor is rebuilt as ``cholesky_lower(S S.T)``, and a
    failure there propagates as filter breakdown.
    """
    t0, t1 = t_span
    if t1 == t0:
        return SqrtGaussianBelief(belief.mean.copy(), belief.sqrt_cov.copy())
    out, _ = integrate_adaptive(sqrt_mde_rhs(model), t_span, pack_belief(belief), tol)
    predicted = unpack_belief(out, model.n, sqrt=True)
    factor = np.tril(predicted.sqrt_cov)
    if np.any(np.diag(factor) <= 0.0):
        factor = cholesky_lower(factor @ factor.T)
    predicted.sqrt_cov = factor
    return predicted
