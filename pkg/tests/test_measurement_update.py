import numpy as np
import pytest

from cdkalman.exceptions import NotPositiveDefinite
from cdkalman.linalg import cholesky_lower
from cdkalman.measurement_update import (
    MeasurementModel,
    mu_conventional,
    mu_ekf_linearized,
    mu_sqrt_joseph,
    mu_sqrt_onesweep,
    wrap_angle,
)
from cdkalman.models import radar_jacobian, radar_model, CT_INITIAL_MEAN
from cdkalman.sigma_rules import UkfParams, make_5dckf_rule, make_ukf_rule
from cdkalman.time_update import (
    GaussianBelief,
    SqrtGaussianBelief,
    finite_difference_jacobian,
)


def linear_model(h_matrix, noise_cov):
    h_matrix = np.asarray(h_matrix, dtype=float)
    return MeasurementModel(
        m=h_matrix.shape[0], h=lambda k, x: h_matrix @ np.atleast_2d(x),
        jacobian_h=lambda k, x: h_matrix, noise_cov=noise_cov)


def closed_form_kf(mean, cov, h_matrix, noise_cov, z):
    """Textbook Kalman update with Joseph-form covariance (oracle)."""
    re = h_matrix @ cov @ h_matrix.T + noise_cov
    gain = cov @ h_matrix.T @ np.linalg.inv(re)
    post_mean = mean + gain @ (z - h_matrix @ mean)
    ikh = np.eye(len(mean)) - gain @ h_matrix
    post_cov = ikh @ cov @ ikh.T + gain @ noise_cov @ gain.T
    return post_mean, post_cov


@pytest.fixture
def linear_setup():
    rng = np.random.default_rng(17)
    n, m = 5, 2
    a = rng.standard_normal((n, n))
    cov = a @ a.T + n * np.eye(n)
    mean = rng.standard_normal(n)
    h_matrix = rng.standard_normal((m, n))
    noise_cov = np.diag([0.5, 1.5])
    z = rng.standard_normal(m) * 2.0
    return mean, cov, h_matrix, noise_cov, z


ALL_RULES = [lambda n: make_ukf_rule(n),
             lambda n: make_ukf_rule(n, UkfParams(alpha=0.9, beta=2.0, kappa=1.0)),
             lambda n: make_5dckf_rule(n)]


class TestLinearGaussianEquivalence:
    @pytest.mark.parametrize("make_rule", ALL_RULES)
    def test_conventional_matches_closed_form(self, linear_setup, make_rule):
        mean, cov, h_matrix, noise_cov, z = linear_setup
        oracle_mean, oracle_cov = closed_form_kf(mean, cov, h_matrix, noise_cov, z)
        rule = make_rule(len(mean))
        out = mu_conventional(GaussianBelief(mean, cov), z,
                              linear_model(h_matrix, noise_cov), rule)
        assert np.allclose(out.belief.mean, oracle_mean, atol=1e-10)
        assert np.allclose(out.belief.cov, oracle_cov, atol=1e-10)

    @pytest.mark.parametrize("make_rule", ALL_RULES)
    @pytest.mark.parametrize("mu", [mu_sqrt_onesweep, mu_sqrt_joseph])
    def test_sqrt_variants_match_closed_form(self, linear_setup, make_rule, mu):
        mean, cov, h_matrix, noise_cov, z = linear_setup
        oracle_mean, oracle_cov = closed_form_kf(mean, cov, h_matrix, noise_cov, z)
        rule = make_rule(len(mean))
        out = mu(SqrtGaussianBelief(mean, cholesky_lower(cov)), z,
                 linear_model(h_matrix, noise_cov), rule)
        assert np.allclose(out.belief.mean, oracle_mean, atol=1e-9)
        recon = out.belief.sqrt_cov @ out.belief.sqrt_cov.T
        assert np.allclose(recon, oracle_cov, atol=1e-9)
        factor = out.belief.sqrt_cov
        assert np.all(np.triu(factor, 1) == 0.0)
        assert np.all(np.diag(factor) > 0.0)

    def test_linearized_matches_closed_form(self, linear_setup):
        mean, cov, h_matrix, noise_cov, z = linear_setup
        oracle_mean, oracle_cov = closed_form_kf(mean, cov, h_matrix, noise_cov, z)
        out = mu_ekf_linearized(GaussianBelief(mean, cov), z,
                                linear_model(h_matrix, noise_cov))
        assert np.allclose(out.belief.mean, oracle_mean, atol=1e-10)
        assert np.allclose(out.belief.cov, oracle_cov, atol=1e-10)

    def test_posterior_never_exceeds_prior(self, linear_setup):
        mean, cov, h_matrix, noise_cov, z = linear_setup
        rule = make_ukf_rule(len(mean))
        out = mu_conventional(GaussianBelief(mean, cov), z,
                              linear_model(h_matrix, noise_cov), rule)
        gap = cov - out.belief.cov
        assert np.min(np.linalg.eigvalsh(0.5 * (gap + gap.T))) >= -1e-10 * np.linalg.norm(cov)


class TestConventionalBehaviour:
    def test_zero_innovation_keeps_mean(self, linear_setup):
        mean, cov, h_matrix, noise_cov, _ = linear_setup
        rule = make_5dckf_rule(len(mean))
        model = linear_model(h_matrix, noise_cov)
        zhat = (h_matrix @ mean)
        out = mu_conventional(GaussianBelief(mean, cov), zhat, model, rule)
        assert np.allclose(out.belief.mean, mean, atol=1e-12 * (1 + np.abs(mean).max()))
        assert np.allclose(out.innovation, 0.0, atol=1e-12)

    def test_uninformative_measurement_limit(self, linear_setup):
        mean, cov, h_matrix, _, z = linear_setup
        rule = make_ukf_rule(len(mean))
        model = linear_model(h_matrix, 1e12 * np.eye(2))
        out = mu_conventional(GaussianBelief(mean, cov), z, model, rule)
        assert np.linalg.norm(out.belief.mean - mean) <= 1e-9 * (1 + np.linalg.norm(mean))
        assert np.linalg.norm(out.belief.cov - cov) <= 1e-9 * np.linalg.norm(cov)

    def test_indefinite_prior_raises(self, linear_setup):
        _, _, h_matrix, noise_cov, z = linear_setup
        rule = make_ukf_rule(5)
        bad = GaussianBelief(np.zeros(5), -np.eye(5))
        with pytest.raises(NotPositiveDefinite):
            mu_conventional(bad, z, linear_model(h_matrix, noise_cov), rule)


def radar_prior():
    rng = np.random.default_rng(23)
    a = rng.standard_normal((7, 7))
    cov = 0.5 * (a @ a.T) + np.diag([40.0, 4.0, 40.0, 4.0, 40.0, 4.0, 1e-4])
    return GaussianBelief(CT_INITIAL_MEAN.copy(), cov)


class TestRadarAgreement:
    @pytest.mark.parametrize("make_rule", [make_ukf_rule, make_5dckf_rule])
    def test_onesweep_matches_conventional(self, make_rule):
        belief = radar_prior()
        model = radar_model()
        rule = make_rule(7)
        z = np.array([2856.0, 1.21, 0.070])
        conv = mu_conventional(belief, z, model, rule)
        sqrt = mu_sqrt_onesweep(
            SqrtGaussianBelief(belief.mean, cholesky_lower(belief.cov)),
            z, model, rule)
        assert np.allclose(sqrt.belief.mean, conv.belief.mean,
                           rtol=1e-8, atol=1e-8 * np.abs(conv.belief.mean).max())
        recon = sqrt.belief.sqrt_cov @ sqrt.belief.sqrt_cov.T
        assert np.linalg.norm(recon - conv.belief.cov) \
            <= 1e-8 * np.linalg.norm(conv.belief.cov)

    @pytest.mark.parametrize("make_rule", [make_ukf_rule, make_5dckf_rule])
    def test_joseph_matches_onesweep(self, make_rule):
        belief = radar_prior()
        model = radar_model()
        rule = make_rule(7)
        z = np.array([2856.0, 1.21, 0.070])
        sqrt_belief = SqrtGaussianBelief(belief.mean, cholesky_lower(belief.cov))
        one = mu_sqrt_onesweep(sqrt_belief, z, model, rule)
        jos = mu_sqrt_joseph(sqrt_belief, z, model, rule)
        assert np.allclose(jos.belief.mean, one.belief.mean, rtol=1e-8, atol=1e-6)
        recon_one = one.belief.sqrt_cov @ one.belief.sqrt_cov.T
        recon_jos = jos.belief.sqrt_cov @ jos.belief.sqrt_cov.T
        assert np.linalg.norm(recon_jos - recon_one) \
            <= 1e-8 * np.linalg.norm(recon_one)

    def test_innovation_factor_identity(self):
        belief = radar_prior()
        model = radar_model()
        rule = make_5dckf_rule(7)
        z = np.array([2856.0, 1.21, 0.070])
        sqrt_belief = SqrtGaussianBelief(belief.mean, cholesky_lower(belief.cov))
        out = mu_sqrt_onesweep(sqrt_belief, z, model, rule)
        conv = mu_conventional(belief, z, model, rule)
        re_recon = out.innovation_cov_sqrt @ out.innovation_cov_sqrt.T
        assert np.linalg.norm(re_recon - conv.innovation_cov) \
            <= 1e-10 * np.linalg.norm(conv.innovation_cov)

    def test_constant_measurement_keeps_prior(self):
        # zero-gain corner: h constant => cross covariance 0, K = 0
        belief = radar_prior()
        rule = make_ukf_rule(7)
        const = MeasurementModel(
            m=2, h=lambda k, x: np.tile([[1.0], [2.0]], (1, np.atleast_2d(x).shape[1])),
            noise_cov=np.eye(2))
        sqrt_belief = SqrtGaussianBelief(belief.mean, cholesky_lower(belief.cov))
        out = mu_sqrt_joseph(sqrt_belief, np.array([1.0, 2.0]), const, rule)
        assert np.allclose(out.gain, 0.0, atol=1e-12)
        recon = out.belief.sqrt_cov @ out.belief.sqrt_cov.T
        assert np.linalg.norm(recon - belief.cov) <= 1e-9 * np.linalg.norm(belief.cov)
        assert np.allclose(out.belief.mean, belief.mean)


class TestLinearizedBaseline:
    def test_zero_jacobian_is_noop(self):
        belief = GaussianBelief(np.ones(3), np.eye(3))
        model = MeasurementModel(m=1, h=lambda k, x: np.zeros((1, np.atleast_2d(x).shape[1])),
                                 jacobian_h=lambda k, x: np.zeros((1, 3)),
                                 noise_cov=np.eye(1))
        out = mu_ekf_linearized(belief, np.array([5.0]), model)
        assert np.array_equal(out.belief.mean, belief.mean)
        assert np.allclose(out.belief.cov, belief.cov)

    def test_requires_jacobian(self):
        belief = GaussianBelief(np.ones(3), np.eye(3))
        model = MeasurementModel(m=1, h=lambda k, x: np.atleast_2d(x)[:1],
                                 noise_cov=np.eye(1))
        with pytest.raises(ValueError):
            mu_ekf_linearized(belief, np.array([1.0]), model)

    def test_finite_difference_jacobian_agreement(self):
        belief = radar_prior()
        model = radar_model()
        z = np.array([2856.0, 1.21, 0.070])
        analytic = mu_ekf_linearized(belief, z, model)

        def h_vec(t, x):
            return model.h(0, x[:, None])[:, 0]

        fd_jac = finite_difference_jacobian(h_vec, 0.0, belief.mean)
        fd_model = MeasurementModel(m=3, h=model.h,
                                    jacobian_h=lambda k, x: fd_jac,
                                    noise_cov=model.noise_cov,
                                    angular_mask=model.angular_mask)
        numeric = mu_ekf_linearized(belief, z, fd_model)
        assert np.allclose(numeric.belief.mean, analytic.belief.mean,
                           rtol=1e-4, atol=1e-4 * np.abs(analytic.belief.mean).max())
        assert np.allclose(numeric.belief.cov, analytic.belief.cov,
                           rtol=1e-4, atol=1e-4 * np.abs(analytic.belief.cov).max())


class TestAngularWrapping:
    def test_wrap_range(self):
        values = np.array([0.0, np.pi, -np.pi, 3.5 * np.pi, -2.5 * np.pi])
        wrapped = wrap_angle(values)
        assert np.all(wrapped > -np.pi - 1e-15)
        assert np.all(wrapped <= np.pi + 1e-15)
        assert wrapped[1] == pytest.approx(np.pi)
        assert wrapped[2] == pytest.approx(np.pi)  # -pi maps to +pi
        assert wrapped[3] == pytest.approx(-0.5 * np.pi)

    def test_innovation_wrapped_across_cut(self):
        # predicted azimuth near +pi (points all on one side), measurement
        # just across the cut: the wrapped innovation is the small step,
        # never the ~2*pi discontinuity
        mean = np.array([-2800.0, 0.0, 60.0, -150.0, 200.0, 0.0, 3.0])
        cov = np.diag([100.0, 1.0, 100.0, 1.0, 100.0, 1.0, 1e-4])
        model = radar_model()
        rule = make_ukf_rule(7)
        z_true = model.h(0, mean[:, None])[:, 0]
        z = z_true.copy()
        z[1] = wrap_angle(np.array([z_true[1] + 0.03]))[0]  # crosses the cut
        assert z[1] < 0 < z_true[1]
        out = mu_conventional(GaussianBelief(mean, cov), z, model, rule)
        assert out.innovation[1] == pytest.approx(0.03, abs=1e-6)
        assert np.linalg.norm(out.belief.mean[:6] - mean[:6]) < 100.0

    def test_straddling_points_stay_bounded(self):
        # prior mean essentially on the cut: the raw sigma average degrades
        # (documented caveat) but the wrapped innovation stays within (-pi, pi]
        mean = np.array([-2800.0, 0.0, 1.0, -150.0, 200.0, 0.0, 3.0])
        cov = np.diag([100.0, 1.0, 100.0, 1.0, 100.0, 1.0, 1e-4])
        model = radar_model()
        rule = make_ukf_rule(7)
        z = model.h(0, mean[:, None])[:, 0]
        out = mu_conventional(GaussianBelief(mean, cov), z, model, rule)
        assert abs(out.innovation[1]) <= np.pi
