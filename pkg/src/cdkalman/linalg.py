"""Dense small-matrix primitives for the filters.

Lower Cholesky with explicit pivot checks, triangular solves, the
lower-triangular projection used by the Cholesky-factor ODE, and the
J-orthogonal (hyperbolic) block triangularization that powers the
square-root measurement updates.

Matrix factors are plain ``numpy`` arrays: lower triangular, positive
diagonal unless stated otherwise.  All routines are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import (
    DimensionMismatch,
    HyperbolicBreakdown,
    NotPositiveDefinite,
    SingularTriangular,
)

try:  # hot-loop kernels compile with numba when it is available
    from numba import njit as _njit
except ImportError:  # pragma: no cover
    _njit = None

__all__ = [
    "Signature",
    "cholesky_lower",
    "trisolve",
    "phi_map",
    "hyperbolic_block_triangularize",
]

# Inputs may carry tiny asymmetry accumulated by ODE integration; anything
# beyond this relative bound is treated as a caller bug, not noise.
_SYMMETRY_RTOL = 1e-9


@dataclass(frozen=True)
class Signature:
    """Diagonal +/-1 signature, the ``J`` of an indefinite inner product.

    ``signs`` is a 1-D integer array with entries in {+1, -1}.  Negative
    entries are expected to occupy trailing positions when used with
    :func:`hyperbolic_block_triangularize`; rule construction guarantees
    this by permuting sigma points once, up front.
    """

    signs: np.ndarray

    def __post_init__(self) -> None:
        signs = np.asarray(self.signs, dtype=int).ravel()
        if signs.size == 0:
            raise DimensionMismatch("signature must be non-empty")
        if not np.all(np.abs(signs) == 1):
            raise ValueError("signature entries must be +1 or -1")
        object.__setattr__(self, "signs", signs)

    def __len__(self) -> int:
        return int(self.signs.size)

    @property
    def pos_count(self) -> int:
        return int(np.count_nonzero(self.signs > 0))

    @property
    def neg_count(self) -> int:
        return int(np.count_nonzero(self.signs < 0))

    @property
    def negatives_trailing(self) -> bool:
        """True when every -1 sits after every +1."""
        neg = np.flatnonzero(self.signs < 0)
        return neg.size == 0 or neg[0] >= self.pos_count

    @staticmethod
    def identity(n: int) -> "Signature":
        return Signature(np.ones(n, dtype=int))

    @staticmethod
    def block(pos: int, neg: int) -> "Signature":
        return Signature(np.concatenate([np.ones(pos, dtype=int),
                                         -np.ones(neg, dtype=int)]))


def cholesky_lower(mat: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor L with L @ L.T == mat and positive diagonal.

    The input must be symmetric to within ``1e-9 * ||mat||_F``; it is then
    symmetrized as ``(M + M.T) / 2`` before factorization.  A non-positive
    pivot raises :class:`NotPositiveDefinite` -- this is the breakdown event
    the ill-conditioning benchmark counts.
    """
    m = np.asarray(mat, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    scale = float(np.linalg.norm(m))
    asym = float(np.max(np.abs(m - m.T)))
    if asym > _SYMMETRY_RTOL * max(scale, np.finfo(float).tiny):
        raise ValueError(
            f"matrix asymmetry {asym:.3e} exceeds tolerance for scale {scale:.3e}"
        )
    m = 0.5 * (m + m.T)

    n = m.shape[0]
    lower = np.zeros_like(m)
    for j in range(n):
        pivot = m[j, j] - lower[j, :j] @ lower[j, :j]
        if not pivot > 0.0:  # catches 0, negatives and NaN
            raise NotPositiveDefinite(f"non-positive pivot {pivot!r} at index {j}")
        lower[j, j] = np.sqrt(pivot)
        if j + 1 < n:
            lower[j + 1:, j] = (m[j + 1:, j] - lower[j + 1:, :j] @ lower[j, :j]) / lower[j, j]
    return lower


def trisolve(lower: np.ndarray, rhs: np.ndarray, side: str = "left",
             transpose: bool = False) -> np.ndarray:
    """Solve a triangular system with the lower factor ``lower``.

    side="left",  transpose=False :  L X = B
    side="left",  transpose=True  :  L.T X = B
    side="right", transpose=False :  X L = B
    side="right", transpose=True  :  X L.T = B
    """
    L = np.asarray(lower, dtype=float)
    B = np.asarray(rhs, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise DimensionMismatch(f"factor must be square, got {L.shape}")
    if np.any(np.diag(L) == 0.0):
        raise SingularTriangular("zero diagonal entry in triangular factor")
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")

    squeeze = B.ndim == 1
    if squeeze:
        B = B[:, None] if side == "left" else B[None, :]
    try:
        if side == "left":
            out = solve_triangular(L, B, lower=True, trans="T" if transpose else "N",
                                   check_finite=False)
        else:
            # X op(L) = B  <=>  op(L).T X.T = B.T
            out = solve_triangular(L, B.T, lower=True, trans="N" if transpose else "T",
                                   check_finite=False).T
    except ValueError as exc:
        raise DimensionMismatch(str(exc)) from None
    return out.ravel() if squeeze else out


def phi_map(mat: np.ndarray) -> np.ndarray:
    """Lower-triangular projection: strict lower part plus half the diagonal.

    For symmetric M this gives the unique lower-triangular solution of
    ``Phi(M) + Phi(M).T == M``.  Exact and linear elementwise.
    """
    m = np.asarray(mat, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    return np.tril(m, -1) + 0.5 * np.diag(np.diag(m))


def _triangularize_kernel_numpy(work: np.ndarray, s: int, p: int) -> tuple[int, int]:
    """Two-phase elimination, in place.  Returns (-1, -1) on success or the
    (row, column) of an infeasible hyperbolic rotation."""
    t = work.shape[1]
    for i in range(s):
        row = work[i, i:p]
        norm = np.sqrt(row @ row)
        if norm == 0.0:
            continue
        alpha = -norm if row[0] >= 0.0 else norm
        v = row.copy()
        v[0] -= alpha
        vsq = v @ v
        if vsq > 0.0:
            coeff = work[:, i:p] @ v
            work[:, i:p] -= np.outer(coeff, (2.0 / vsq) * v)
        work[i, i] = alpha
        work[i, i + 1:p] = 0.0
    for j in range(p, t):
        for i in range(s):
            b = work[i, j]
            if b == 0.0:
                continue
            a = work[i, i]
            if not abs(a) > abs(b):
                return i, j
            tau = b / a
            c = 1.0 / np.sqrt((1.0 - tau) * (1.0 + tau))
            sh = tau * c
            col_i = work[:, i].copy()
            col_j = work[:, j]
            work[:, i] = c * col_i - sh * col_j
            work[:, j] = c * col_j - sh * col_i
            work[i, j] = 0.0
    return -1, -1


if _njit is not None:
    def _build_numba_kernel():
        import math

        def kernel(work, s, p):  # pragma: no cover - compiled
            rows, t = work.shape
            for i in range(s):
                acc = 0.0
                for c in range(i, p):
                    acc += work[i, c] * work[i, c]
                norm = math.sqrt(acc)
                if norm == 0.0:
                    continue
                alpha = -norm if work[i, i] >= 0.0 else norm
                v0 = work[i, i] - alpha
                vsq = v0 * v0
                for c in range(i + 1, p):
                    vsq += work[i, c] * work[i, c]
                if vsq > 0.0:
                    beta = 2.0 / vsq
                    for r in range(rows):
                        dot = work[r, i] * v0
                        for c in range(i + 1, p):
                            dot += work[r, c] * work[i, c]
                        dot *= beta
                        work[r, i] -= dot * v0
                        if r != i:
                            for c in range(i + 1, p):
                                work[r, c] -= dot * work[i, c]
                work[i, i] = alpha
                for c in range(i + 1, p):
                    work[i, c] = 0.0
            for j in range(p, t):
                for i in range(s):
                    b = work[i, j]
                    if b == 0.0:
                        continue
                    a = work[i, i]
                    if not abs(a) > abs(b):
                        return i, j
                    tau = b / a
                    ch = 1.0 / math.sqrt((1.0 - tau) * (1.0 + tau))
                    sh = tau * ch
                    for r in range(rows):
                        ci = work[r, i]
                        cj = work[r, j]
                        work[r, i] = ch * ci - sh * cj
                        work[r, j] = ch * cj - sh * ci
                    work[i, j] = 0.0
            return -1, -1

        return _njit(cache=True)(kernel)

    _triangularize_kernel = _build_numba_kernel()
else:  # pragma: no cover
    _triangularize_kernel = _triangularize_kernel_numpy


def hyperbolic_block_triangularize(pre: np.ndarray, sig: Signature) -> np.ndarray:
    """Triangularize ``pre`` by a J-orthogonal transform, J = diag(sig).

    Returns the post-array ``[R | 0]`` where R is s-by-s lower triangular
    with positive diagonal and ``R R.T == pre @ J @ pre.T``.  With an
    all-positive signature this reduces to an ordinary orthogonal LQ sweep.

    Two phases: Householder reflectors acting on the positive-signature
    columns produce the triangular pivots, then each negative-signature
    column is annihilated against the diagonal with elementary hyperbolic
    rotations, row by row.  An infeasible rotation (|pivot| <= |entry|)
    raises :class:`HyperbolicBreakdown`: the implicit Gram matrix is
    numerically indefinite, which is the square-root filters' failure event.
    """
    work = np.array(pre, dtype=float)
    if work.ndim == 1:
        work = work[None, :]
    s, t = work.shape
    if len(sig) != t:
        raise DimensionMismatch(f"signature length {len(sig)} != column count {t}")
    if t < s:
        raise DimensionMismatch(f"need at least as many columns as rows ({s}x{t})")
    if not sig.negatives_trailing:
        raise ValueError("negative signature entries must be trailing")
    p = sig.pos_count
    if p < s:
        raise ValueError(f"+1 count {p} of the signature must be >= row count {s}")

    bad_row, bad_col = _triangularize_kernel(work, s, p)
    if bad_row >= 0:
        raise HyperbolicBreakdown(
            f"pivot {work[bad_row, bad_row]!r} cannot eliminate entry "
            f"{work[bad_row, bad_col]!r} (row {bad_row}, column {bad_col})"
        )

    flip = np.diag(work)[:s] < 0.0
    work[:, :s][:, flip] *= -1.0
    return work
