"""Adaptive ODE integration and fixed-step SDE simulation.

The integrator is an explicit embedded pair of orders 5(4) with seven
stages and the first-same-as-last property.  Local error is controlled in
the weighted RMS norm ``err_i / (abs_tol + rel_tol * max(|y_i|, |y_new_i|))``
with acceptance at norm <= 1; steps scale by ``0.9 * norm**(-1/5)`` clipped
to [0.2, 5].  This is the behaviour the filters rely on for discretization
error control between measurements.

Ground truth for the benchmarks comes from ``euler_maruyama_simulate``, a
fixed small-step strong scheme driven by a caller-owned random generator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, TYPE_CHECKING

import numpy as np

from .exceptions import NonFiniteState, StepSizeUnderflow

if TYPE_CHECKING:  # pragma: no cover
    from .time_update import ProcessModel

__all__ = ["Tolerances", "IntegrationStats", "integrate_adaptive",
           "euler_maruyama_simulate"]

RightHandSide = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Tolerances:
    """Absolute and relative integration tolerances, both positive finite."""

    abs_tol: float = 1e-4
    rel_tol: float = 1e-4

    def __post_init__(self) -> None:
        for name, value in (("abs_tol", self.abs_tol), ("rel_tol", self.rel_tol)):
            if not (np.isfinite(value) and value > 0.0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")


@dataclass
class IntegrationStats:
    steps: int = 0
    rejections: int = 0
    rhs_evals: int = 0


# Dormand-Prince 5(4) tableau; row 7 doubles as the 5th-order weights (FSAL).
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                187 / 2100, 1 / 40])
_ERR = _B5 - _B4

_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_SAFETY = 0.9
_UNDERFLOW_FRACTION = 1e-14


def integrate_adaptive(rhs: RightHandSide, t_span: tuple[float, float],
                       y0: np.ndarray, tol: Tolerances
                       ) -> tuple[np.ndarray, IntegrationStats]:
    """Integrate ``dy/dt = rhs(t, y)`` over ``t_span``, landing exactly on t1.

    Returns the terminal state and step statistics.  Raises
    :class:`StepSizeUnderflow` when the required step drops below
    ``1e-14 * (t1 - t0)`` and :class:`NonFiniteState` if the solution or
    error estimate stops being finite.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ValueError(f"need t1 > t0, got span ({t0}, {t1})")
    y = np.asarray(y0, dtype=float).ravel().copy()
    if not np.all(np.isfinite(y)):
        raise NonFiniteState("initial state is not finite")

    span = t1 - t0
    h_floor = _UNDERFLOW_FRACTION * span
    stats = IntegrationStats()
    dim = y.size
    stages = np.empty((7, dim))
    stages[0] = rhs(t0, y)
    stats.rhs_evals += 1

    # scratch buffers; the stage loop runs allocation-free
    yi = np.empty(dim)
    err = np.empty(dim)
    scale = np.empty(dim)

    t = t0
    h = span / 100.0
    while t < t1:
        h = min(h, t1 - t)
        for i in range(1, 7):
            np.dot(_A[i], stages[:i], out=yi)
            yi *= h
            yi += y
            stages[i] = rhs(t + _C[i] * h, yi)
        stats.rhs_evals += 6
        y_new = yi  # stage 7 is evaluated at the 5th-order solution
        np.dot(_ERR, stages, out=err)
        err *= h
        if not (np.isfinite(y_new).all() and np.isfinite(err).all()):
            raise NonFiniteState(f"non-finite state during integration at t={t!r}")

        np.abs(y_new, out=scale)
        np.maximum(scale, np.abs(y), out=scale)
        scale *= tol.rel_tol
        scale += tol.abs_tol
        err /= scale
        norm = float(np.sqrt(err @ err / dim))
        if norm <= 1.0:
            t += h
            y = y_new.copy()  # y_new aliases the stage scratch buffer
            stages[0] = stages[6]  # first-same-as-last
            stats.steps += 1
        else:
            stats.rejections += 1
        factor = _MAX_FACTOR if norm == 0.0 else _SAFETY * norm ** -0.2
        h *= min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
        if t < t1 and h < h_floor:
            raise StepSizeUnderflow(
                f"step {h!r} below floor {h_floor!r} at t={t!r}"
            )
    return y, stats


def euler_maruyama_simulate(model: "ProcessModel", x0: np.ndarray,
                            t_span: tuple[float, float], step: float,
                            rng: np.random.Generator,
                            return_path: bool = False):
    """Strong Euler-Maruyama simulation of ``dx = f(t,x) dt + G dbeta``.

    ``x_{j+1} = x_j + f(t_j, x_j) h + G Q^{1/2} sqrt(h) eta_j`` with standard
    normal ``eta_j`` drawn from ``rng``; the last step is shortened when
    ``step`` does not divide the span.  Deterministic for a given generator
    state.  Returns the terminal state, or ``(times, path)`` including the
    initial point when ``return_path`` is set.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    if step <= 0.0 or not t1 > t0:
        raise ValueError("need a positive step and t1 > t0")
    span = t1 - t0
    n_steps = max(1, int(np.ceil(span / step - 1e-12)))
    noise_gain = model.diffusion @ np.linalg.cholesky(model.diffusion_cov)

    x = np.asarray(x0, dtype=float).ravel().copy()
    draws = rng.standard_normal((n_steps, noise_gain.shape[1]))
    # all noise increments in one product; the (possibly shortened) last
    # step is rescaled below
    increments = draws @ (np.sqrt(step) * noise_gain.T)
    path = [x.copy()] if return_path else None
    times = [t0] if return_path else None
    drift = model.drift
    t = t0
    for j in range(n_steps):
        h = min(step, t1 - t)
        if h != step:
            increments[j] = noise_gain @ draws[j] * np.sqrt(h)
        x = x + drift(t, x) * h + increments[j]
        t = t0 + (j + 1) * step if j + 1 < n_steps else t1
        if return_path:
            path.append(x.copy())
            times.append(t)
    if not np.all(np.isfinite(x)):
        raise NonFiniteState("Euler-Maruyama path diverged")
    if return_path:
        return np.asarray(times), np.asarray(path)
    return x
