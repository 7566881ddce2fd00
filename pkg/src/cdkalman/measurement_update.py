"""Measurement updates: sigma-rule, square-root array, and linearized forms.

All variants share the predicted-measurement statistics

    Z     = h(k, X),      zhat = Z w,
    R_e   = Z W Z.T + R,  P_xz = X W Z.T,

with X the sigma-point matrix drawn from the prior.  The conventional
update applies the textbook gain/covariance formulas.  The square-root
variants never form R_e or P: they triangularize pre-arrays built from
``|W|^{1/2}`` with the J-orthogonal transform, J = diag(I_m, S_rule), and
read the factors off the post-array.

Innovation components flagged angular are wrapped to (-pi, pi] before the
gain is applied.  Predicted-measurement averaging itself uses raw h
outputs, so a sigma spread straddling the +-pi cut briefly degrades the
azimuth prediction; the wrap keeps the correction bounded.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import NonFiniteState
from .linalg import Signature, cholesky_lower, hyperbolic_block_triangularize, trisolve
from .sigma_rules import SigmaRule, draw_sigma_matrix
from .time_update import GaussianBelief, SqrtGaussianBelief

__all__ = [
    "MeasurementModel",
    "UpdateResult",
    "wrap_angle",
    "mu_conventional",
    "mu_sqrt_onesweep",
    "mu_sqrt_joseph",
    "mu_ekf_linearized",
]

MeasurementFn = Callable[[int, np.ndarray], np.ndarray]
MeasurementJacobian = Callable[[int, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class MeasurementModel:
    """Discrete measurement ``z_k = h(k, x(t_k)) + v_k``, v_k ~ N(0, R).

    ``h`` maps an n-by-N matrix of states columnwise to an m-by-N matrix.
    ``angular_mask`` marks angle-valued output components (wrapped
    innovations).  Optional glint fields turn the noise into the mixture
    ``(1 - p) N(0, R) + p N(0, glint_cov)`` during simulation only; filters
    always assume R.
    """

    m: int
    h: MeasurementFn
    noise_cov: np.ndarray
    jacobian_h: MeasurementJacobian | None = None
    angular_mask: np.ndarray | None = None
    glint_prob: float = 0.0
    glint_cov: np.ndarray | None = None
    name: str = ""

    def __post_init__(self) -> None:
        r = np.asarray(self.noise_cov, dtype=float)
        if r.shape != (self.m, self.m):
            raise ValueError(f"noise_cov shape {r.shape} != ({self.m}, {self.m})")
        object.__setattr__(self, "noise_cov", r)
        mask = (np.zeros(self.m, dtype=bool) if self.angular_mask is None
                else np.asarray(self.angular_mask, dtype=bool).ravel())
        if mask.size != self.m:
            raise ValueError("angular_mask length must equal m")
        object.__setattr__(self, "angular_mask", mask)
        if not 0.0 <= self.glint_prob < 1.0:
            raise ValueError("glint_prob must lie in [0, 1)")

    def sqrt_noise_cov(self) -> np.ndarray:
        return cholesky_lower(self.noise_cov)


@dataclass
class UpdateResult:
    """Posterior belief plus the update by-products used in diagnostics."""

    belief: GaussianBelief | SqrtGaussianBelief
    innovation: np.ndarray
    gain: np.ndarray
    predicted_measurement: np.ndarray
    innovation_cov: np.ndarray | None = None        # full R_e (conventional paths)
    innovation_cov_sqrt: np.ndarray | None = None   # lower factor (array paths)


def wrap_angle(values: np.ndarray) -> np.ndarray:
    """Wrap to (-pi, pi]."""
    wrapped = np.mod(np.asarray(values, dtype=float), 2.0 * np.pi)
    return np.where(wrapped > np.pi, wrapped - 2.0 * np.pi, wrapped)


def _wrapped_innovation(z: np.ndarray, zhat: np.ndarray,
                        model: MeasurementModel) -> np.ndarray:
    nu = np.asarray(z, dtype=float).ravel() - zhat
    if model.angular_mask.any():
        nu = np.where(model.angular_mask, wrap_angle(nu), nu)
    return nu


def _check_finite(*arrays: np.ndarray) -> None:
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NonFiniteState("non-finite value in measurement update")


def _rule_arrays(mean: np.ndarray, sqrt_cov: np.ndarray, rule: SigmaRule,
                 model: MeasurementModel, k: int):
    points = draw_sigma_matrix(mean, sqrt_cov, rule)
    images = np.asarray(model.h(k, points), dtype=float)
    zhat = images @ rule.weights
    return points, images, zhat


def _centered_product(left: np.ndarray, left_mean: np.ndarray,
                      right: np.ndarray, right_mean: np.ndarray,
                      rule: SigmaRule) -> np.ndarray:
    """``left W right.T`` evaluated as a weighted sum of centered columns."""
    lc = left - left_mean[:, None]
    rc = right - right_mean[:, None]
    return (lc * rule.cov_weights[None, :]) @ rc.T


def mu_conventional(belief: GaussianBelief, z: np.ndarray,
                    model: MeasurementModel, rule: SigmaRule,
                    k: int = 0) -> UpdateResult:
    """Full-covariance sigma-rule update.

    Factorizes the prior covariance to draw points, then applies
    ``K = P_xz R_e^{-1}`` (by Cholesky solve) and
    ``P+ = P - K R_e K.T`` with symmetrization.
    """
    sqrt_cov = cholesky_lower(belief.cov)
    points, images, zhat = _rule_arrays(belief.mean, sqrt_cov, rule, model, k)
    re = _centered_product(images, zhat, images, zhat, rule) + model.noise_cov
    pxz = _centered_product(points, belief.mean, images, zhat, rule)

    re_factor = cholesky_lower(re)
    gain = trisolve(re_factor, trisolve(re_factor, pxz.T), transpose=True).T
    nu = _wrapped_innovation(z, zhat, model)
    mean = belief.mean + gain @ nu
    cov = belief.cov - gain @ re @ gain.T
    cov = 0.5 * (cov + cov.T)
    _check_finite(mean, cov)
    return UpdateResult(GaussianBelief(mean, cov), nu, gain, zhat,
                        innovation_cov=re)


def _mu_signature(rule: SigmaRule, m: int) -> Signature:
    return Signature(np.concatenate([np.ones(m, dtype=int), rule.signature.signs]))


def mu_sqrt_onesweep(belief: SqrtGaussianBelief, z: np.ndarray,
                     model: MeasurementModel, rule: SigmaRule,
                     k: int = 0) -> UpdateResult:
    """One-sweep array update.

    Triangularizing

        [ R^{1/2}   Z |W|^{1/2} ]            [ R_e^{1/2}    0       0 ]
        [ 0         X |W|^{1/2} ]  Q  =      [ Pbar_xz   P+^{1/2}   0 ]

    with a J-orthogonal Q yields every posterior quantity in one pass;
    ``K = Pbar_xz R_e^{-1/2}`` by a triangular solve.

    The columns of ``|W|^{1/2}`` sum against the all-ones vector to zero, so
    the point images are centered before the product: exact algebraically,
    and it keeps pre-array entries at spread scale instead of state scale.
    """
    m, n = model.m, belief.n
    points, images, zhat = _rule_arrays(belief.mean, belief.sqrt_cov, rule, model, k)
    zw = (images - zhat[:, None]) @ rule.sqrt_w_abs
    xw = (points - belief.mean[:, None]) @ rule.sqrt_w_abs
    pre = np.zeros((m + n, m + zw.shape[1]))
    pre[:m, :m] = model.sqrt_noise_cov()
    pre[:m, m:] = zw
    pre[m:, m:] = xw
    post = hyperbolic_block_triangularize(pre, _mu_signature(rule, m))

    re_factor = post[:m, :m]
    pxz_bar = post[m:, :m]
    posterior_factor = post[m:, m:m + n]
    gain = trisolve(re_factor, pxz_bar, side="right")
    nu = _wrapped_innovation(z, zhat, model)
    mean = belief.mean + gain @ nu
    _check_finite(mean, posterior_factor)
    return UpdateResult(SqrtGaussianBelief(mean, posterior_factor), nu, gain, zhat,
                        innovation_cov_sqrt=re_factor)


def mu_sqrt_joseph(belief: SqrtGaussianBelief, z: np.ndarray,
                   model: MeasurementModel, rule: SigmaRule,
                   k: int = 0) -> UpdateResult:
    """Two-sweep array update factorizing the Joseph-stabilized form
    ``P+ = (X - K Z) W (X - K Z).T + K R K.T``.

    The first sweep triangularizes ``[R^{1/2}, Z |W|^{1/2}]`` for
    ``R_e^{1/2}``; the second triangularizes
    ``[K R^{1/2}, (X - K Z) |W|^{1/2}]`` for the posterior factor.

    As in the one-sweep form, every block multiplying ``|W|^{1/2}`` is
    centered first (exact: ones annihilate against the factor); this keeps
    the residual block at spread scale even when the gain is large.
    """
    m, n = model.m, belief.n
    points, images, zhat = _rule_arrays(belief.mean, belief.sqrt_cov, rule, model, k)
    sig = _mu_signature(rule, m)
    sqrt_r = model.sqrt_noise_cov()
    images_c = images - zhat[:, None]
    points_c = points - belief.mean[:, None]

    pre1 = np.concatenate([sqrt_r, images_c @ rule.sqrt_w_abs], axis=1)
    re_factor = hyperbolic_block_triangularize(pre1, sig)[:, :m]

    pxz = (points_c * rule.cov_weights[None, :]) @ images_c.T
    pxz_bar = trisolve(re_factor, pxz, side="right", transpose=True)
    gain = trisolve(re_factor, pxz_bar, side="right")

    residual_c = points_c - gain @ images_c
    pre2 = np.concatenate([gain @ sqrt_r, residual_c @ rule.sqrt_w_abs], axis=1)
    posterior_factor = hyperbolic_block_triangularize(pre2, sig)[:, :n]

    nu = _wrapped_innovation(z, zhat, model)
    mean = belief.mean + gain @ nu
    _check_finite(mean, posterior_factor)
    return UpdateResult(SqrtGaussianBelief(mean, posterior_factor), nu, gain, zhat,
                        innovation_cov_sqrt=re_factor)


def mu_ekf_linearized(belief: GaussianBelief, z: np.ndarray,
                      model: MeasurementModel, k: int = 0) -> UpdateResult:
    """First-order linearized update (baseline EKF), Joseph-form covariance."""
    if model.jacobian_h is None:
        raise ValueError("linearized update requires an analytic measurement Jacobian")
    jac = np.asarray(model.jacobian_h(k, belief.mean), dtype=float)
    zhat = np.asarray(model.h(k, belief.mean[:, None]), dtype=float)[:, 0]
    re = jac @ belief.cov @ jac.T + model.noise_cov

    re_factor = cholesky_lower(re)
    pxz = belief.cov @ jac.T
    gain = trisolve(re_factor, trisolve(re_factor, pxz.T), transpose=True).T
    nu = _wrapped_innovation(z, zhat, model)
    mean = belief.mean + gain @ nu
    identity_kh = np.eye(belief.n) - gain @ jac
    cov = identity_kh @ belief.cov @ identity_kh.T + gain @ model.noise_cov @ gain.T
    cov = 0.5 * (cov + cov.T)
    _check_finite(mean, cov)
    return UpdateResult(GaussianBelief(mean, cov), nu, gain, zhat,
                        innovation_cov=re)
