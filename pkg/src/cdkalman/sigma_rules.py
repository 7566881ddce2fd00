"""Sigma and cubature rules in matrix-vector form.

A rule is a set of unit-covariance generator vectors ``gammas`` (columns),
mean weights ``w``, covariance weights ``wc``, and the factored weight
operator used by the square-root updates:

    W           = [I - 1 (x) w] diag(wc) [I - 1 (x) w].T
    |W|^{1/2}   = [I - 1 (x) w] diag(sqrt(|wc_0|), ..., sqrt(|wc_{N-1}|))
    S           = diag(sgn(wc_0), ..., sgn(wc_{N-1})),   sgn(0) := +1

so that ``Z W Z.T == (Z |W|^{1/2}) S (Z |W|^{1/2}).T`` for any point image
``Z``.  Negative covariance weights are permuted to trailing positions at
construction time, once, so the signature is always of block form
``diag(I, -I)`` and hyperbolic triangularization applies directly.

Two families:

* fifth-degree cubature: ``N = 2n**2 + 1`` points, exact for Gaussian
  monomials up to total degree 5.  Center weight ``2/(n+2)``; each of the
  ``2n(n-1)`` cross points ``+-sqrt(n+2) * (e_k +- e_l)/sqrt(2)`` carries
  ``1/(n+2)**2``; each of the ``2n`` axis points ``+-sqrt(n+2) e_p``
  carries ``(4-n) / (2(n+2)**2)``, negative once ``n > 4``.
* scaled unscented: ``N = 2n + 1`` points from the scalars (alpha, beta,
  kappa), exact to degree 3.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateScaling, DimensionMismatch, InvalidDimension
from .linalg import Signature

__all__ = [
    "UkfParams",
    "SigmaRule",
    "build_weight_factor",
    "make_5dckf_rule",
    "make_ukf_rule",
    "draw_sigma_matrix",
]


@dataclass(frozen=True)
class UkfParams:
    """Scaled unscented transform scalars.

    ``lam(n) = alpha**2 * (kappa + n) - n`` must satisfy ``n + lam > 0``.
    The classical choice is alpha=1, beta=0, kappa=3-n.
    """

    alpha: float = 1.0
    beta: float = 0.0
    kappa: float | None = None  # None resolves to the classical 3 - n

    def resolved_kappa(self, n: int) -> float:
        return 3.0 - n if self.kappa is None else float(self.kappa)

    def lam(self, n: int) -> float:
        return self.alpha ** 2 * (self.resolved_kappa(n) + n) - n


@dataclass(frozen=True)
class SigmaRule:
    """Immutable weighted point set; see the module docstring for fields."""

    kind: str                 # "ukf" or "5dckf"
    gammas: np.ndarray        # (n, N) unit-covariance generator vectors
    weights: np.ndarray       # (N,) mean weights, sum to 1
    cov_weights: np.ndarray   # (N,) covariance weights, negatives trailing
    sqrt_w_abs: np.ndarray = field(repr=False, default=None)  # (N, N) |W|^{1/2}
    signature: Signature = None

    @property
    def n(self) -> int:
        return int(self.gammas.shape[0])

    @property
    def point_count(self) -> int:
        return int(self.gammas.shape[1])

    def weight_matrix(self) -> np.ndarray:
        """The explicit N-by-N operator W (diagnostics; updates use the factor)."""
        N = self.point_count
        centering = np.eye(N) - np.tile(self.weights[:, None], (1, N))
        return centering @ np.diag(self.cov_weights) @ centering.T


def build_weight_factor(weights: np.ndarray,
                        cov_weights: np.ndarray) -> tuple[np.ndarray, Signature]:
    """Factor the weight operator: ``|W|^{1/2}`` and its signature.

    Requires the negative entries of ``cov_weights`` to be trailing (rule
    constructors arrange this).  Zero weights sign as +1.
    """
    w = np.asarray(weights, dtype=float).ravel()
    wc = np.asarray(cov_weights, dtype=float).ravel()
    if w.shape != wc.shape:
        raise DimensionMismatch("weights and cov_weights must have equal length")
    N = w.size
    signs = np.where(wc < 0.0, -1, 1)
    centering = np.eye(N) - np.tile(w[:, None], (1, N))
    factor = centering * np.sqrt(np.abs(wc))[None, :]
    return factor, Signature(signs)


def _finalize(kind: str, gammas: np.ndarray, w: np.ndarray,
              wc: np.ndarray) -> SigmaRule:
    order = np.argsort(wc < 0.0, kind="stable")  # non-negative first, stable
    gammas = np.ascontiguousarray(gammas[:, order])
    w = w[order]
    wc = wc[order]
    factor, sig = build_weight_factor(w, wc)
    return SigmaRule(kind=kind, gammas=gammas, weights=w, cov_weights=wc,
                     sqrt_w_abs=factor, signature=sig)


def make_5dckf_rule(n: int) -> SigmaRule:
    """Fifth-degree spherical-radial cubature rule for dimension ``n >= 2``.

    Column order: center; +cross-sum pairs (k<l, lexicographic); their
    negations; +cross-difference pairs; their negations; +axis; -axis.
    For ``n > 4`` the 2n axis weights are negative and trail, giving the
    signature ``diag(I_{N-2n}, -I_{2n})``.
    """
    if n < 2:
        raise InvalidDimension(f"fifth-degree rule needs n >= 2, got {n}")
    N = 2 * n * n + 1
    radius = np.sqrt(n + 2.0)
    pairs = [(k, l) for k in range(n) for l in range(k + 1, n)]

    gammas = np.zeros((n, N))
    col = 1
    # cross-sum block: + then -, then cross-difference block: + then -
    for use_diff in (False, True):
        for neg in (1.0, -1.0):
            for (k, l) in pairs:
                vec = np.zeros(n)
                vec[k] = 1.0
                vec[l] = -1.0 if use_diff else 1.0
                gammas[:, col] = neg * radius * np.sqrt(0.5) * vec
                col += 1
    for neg in (1.0, -1.0):
        for p in range(n):
            gammas[p, col] = neg * radius
            col += 1
    assert col == N

    w = np.empty(N)
    w[0] = 2.0 / (n + 2.0)
    w[1:1 + 4 * len(pairs)] = 1.0 / (n + 2.0) ** 2
    w[1 + 4 * len(pairs):] = (4.0 - n) / (2.0 * (n + 2.0) ** 2)
    return _finalize("5dckf", gammas, w, w.copy())


def make_ukf_rule(n: int, params: UkfParams | None = None) -> SigmaRule:
    """Scaled unscented rule: center point plus ``+-sqrt(n+lam) e_i``.

    Any point whose covariance weight is negative (the center, under the
    classical parametrization with n > 3) is permuted to the end before the
    weight factor and signature are formed.
    """
    if n < 1:
        raise InvalidDimension(f"unscented rule needs n >= 1, got {n}")
    params = params or UkfParams()
    lam = params.lam(n)
    if not n + lam > 0.0:
        raise DegenerateScaling(f"n + lambda = {n + lam} must be positive")
    N = 2 * n + 1
    spread = np.sqrt(n + lam)

    gammas = np.zeros((n, N))
    gammas[:, 1:n + 1] = spread * np.eye(n)
    gammas[:, n + 1:] = -spread * np.eye(n)

    w = np.full(N, 1.0 / (2.0 * (n + lam)))
    w[0] = lam / (n + lam)
    wc = w.copy()
    wc[0] = w[0] + 1.0 - params.alpha ** 2 + params.beta
    return _finalize("ukf", gammas, w, wc)


def draw_sigma_matrix(mean: np.ndarray, sqrt_cov: np.ndarray,
                      rule: SigmaRule) -> np.ndarray:
    """Point matrix with column i equal to ``mean + sqrt_cov @ gammas[:, i]``."""
    mean = np.asarray(mean, dtype=float).ravel()
    sqrt_cov = np.asarray(sqrt_cov, dtype=float)
    if mean.size != rule.n or sqrt_cov.shape != (rule.n, rule.n):
        raise DimensionMismatch(
            f"mean/sqrt_cov of sizes {mean.size}/{sqrt_cov.shape} do not match "
            f"rule dimension {rule.n}"
        )
    return mean[:, None] + sqrt_cov @ rule.gammas
