"""Shared test oracles: Gaussian moments, exactly-discretized linear
systems, and the closed-form discrete Kalman filter."""

import numpy as np
from scipy.linalg import expm

from cdkalman.bench import build_models
from cdkalman.filters import FilterSpec, run_filter
from cdkalman.measurement_update import MeasurementModel
from cdkalman.models import (
    CT_INITIAL_COV,
    CT_INITIAL_MEAN,
    SimulatedDataset,
    simulate_dataset,
)
from cdkalman.ode import Tolerances
from cdkalman.time_update import ProcessModel


def gaussian_moment(alpha):
    """E[prod x_i^a_i] for x ~ N(0, I): product of (a_i - 1)!! over even a_i."""
    out = 1.0
    for a in alpha:
        if a % 2 == 1:
            return 0.0
        for factor in range(a - 1, 0, -2):
            out *= factor
    return out


def monomials(n, max_degree):
    """All exponent tuples over n variables with total degree <= max_degree."""
    def rec(prefix, remaining, slots):
        if slots == 0:
            yield tuple(prefix)
            return
        for p in range(remaining + 1):
            yield from rec(prefix + [p], remaining - p, slots - 1)
    yield from rec([], max_degree, n)


def rule_moment(rule, alpha, weights):
    mono = np.ones(rule.point_count)
    for axis, power in enumerate(alpha):
        if power:
            mono *= rule.gammas[axis] ** power
    return float(weights @ mono)


def run_variant_comparison(seed, tol=1e-6):
    """One Gaussian coordinated-turn run of all six mixed variants at a tight
    integration tolerance; returns per-family max relative position gaps
    between the conventional trace and each square-root trace.

    Module-level so process pools can dispatch it.
    """
    process, meas = build_models("gauss")
    dataset = simulate_dataset(process, meas, CT_INITIAL_MEAN, CT_INITIAL_COV,
                               1.0, 150, 1e-3, seed)
    tight = Tolerances(tol, tol)
    gaps = {}
    for family in ("ekf-ukf", "ekf-5dckf"):
        traces = {}
        for variant in ("conventional", "sr-onesweep", "sr-joseph"):
            spec = FilterSpec(family, variant, tolerances=tight)
            trace = run_filter(spec, dataset, process, meas)
            assert not trace.failed, (family, variant, seed)
            traces[variant] = trace.means[:, (0, 2, 4)]
        base = traces["conventional"]
        denom = 1.0 + np.abs(base)
        gaps[family] = max(
            float(np.max(np.abs(traces[v] - base) / denom))
            for v in ("sr-onesweep", "sr-joseph"))
    return gaps


def make_linear_system(seed, n=4, m=2, q=2):
    """Stable random linear SDE with a linear measurement."""
    rng = np.random.default_rng(seed)
    skew = rng.standard_normal((n, n))
    drift_mat = 0.5 * (skew - skew.T) - 0.4 * np.eye(n)
    gain = rng.standard_normal((n, q)) * 0.5
    h_mat = rng.standard_normal((m, n))
    noise_cov = np.diag(rng.uniform(0.4, 1.5, size=m))
    process = ProcessModel(
        n=n, q=q,
        drift=lambda t, x: drift_mat @ x,
        jacobian=lambda t, x: drift_mat,
        diffusion=gain, diffusion_cov=np.eye(q))
    meas = MeasurementModel(
        m=m, h=lambda k, x: h_mat @ np.atleast_2d(x),
        jacobian_h=lambda k, x: h_mat, noise_cov=noise_cov)
    return process, meas, drift_mat, gain, h_mat, noise_cov


def van_loan_discretization(drift_mat, diffusion, delta):
    """Exact (expm-based) discretization of the linear moment equations."""
    n = drift_mat.shape[0]
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = -drift_mat
    block[:n, n:] = diffusion @ diffusion.T
    block[n:, n:] = drift_mat.T
    exp_block = expm(block * delta)
    phi = exp_block[n:, n:].T
    q_d = phi @ exp_block[:n, n:]
    return phi, 0.5 * (q_d + q_d.T)


def discrete_kf_means(phi, q_d, h_mat, noise_cov, mean0, cov0, zs):
    """Closed-form discrete Kalman filter posterior means (oracle)."""
    mean, cov = mean0.copy(), cov0.copy()
    out = []
    for z in zs:
        mean = phi @ mean
        cov = phi @ cov @ phi.T + q_d
        re = h_mat @ cov @ h_mat.T + noise_cov
        gain = cov @ h_mat.T @ np.linalg.inv(re)
        mean = mean + gain @ (z - h_mat @ mean)
        ikh = np.eye(len(mean)) - gain @ h_mat
        cov = ikh @ cov @ ikh.T + gain @ noise_cov @ gain.T
        out.append(mean.copy())
    return np.asarray(out)


def linear_dataset(seed, steps=50, delta=0.5, n=4, m=2):
    """Dataset sampled from the exact discretization, plus the oracle pieces."""
    process, meas, drift_mat, gain, h_mat, noise_cov = make_linear_system(
        seed, n=n, m=m)
    rng = np.random.default_rng(seed + 1)
    phi, q_d = van_loan_discretization(drift_mat, gain, delta)
    init_mean = rng.standard_normal(n)
    init_cov = np.diag(rng.uniform(0.5, 2.0, size=n))
    x = init_mean + np.linalg.cholesky(init_cov) @ rng.standard_normal(n)
    times, truths, zs = [], [], []
    chol_qd = np.linalg.cholesky(q_d + 1e-12 * np.eye(n))
    for k in range(1, steps + 1):
        x = phi @ x + chol_qd @ rng.standard_normal(n)
        z = h_mat @ x + np.linalg.cholesky(noise_cov) @ rng.standard_normal(m)
        times.append(k * delta)
        truths.append(x.copy())
        zs.append(z)
    dataset = SimulatedDataset(
        times=np.asarray(times), truths=np.asarray(truths),
        measurements=np.asarray(zs), seed=seed, delta_s=delta, em_step_s=delta,
        init_mean=init_mean, init_cov=init_cov, x0_true=init_mean,
        model="linear-test")
    return process, meas, dataset, (phi, q_d, h_mat, noise_cov)
