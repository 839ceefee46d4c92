import math

import numpy as np
import pytest
from scipy import integrate

from modules.moments import single_moment
from modules.ug_distribution import UgParams, UgTwoParam, pdf, cdf, quantile, sample, pdf_two_param, \
    cdf_two_param, log_likelihood, fit_mle, _score_and_hessian
from modules.utils.errors import ParameterDomainError, InsufficientDataError


def two_param_sample(alpha: float, theta: float, size: int, seed: int) -> np.ndarray:
    u = np.random.default_rng(seed).uniform(np.finfo(float).tiny, 1.0, size)
    return (1.0 - np.log(u) / alpha) ** (-1.0 / theta)


class TestParams:

    @pytest.mark.parametrize('kwargs', [dict(sigma=0.0), dict(sigma=-1.0), dict(theta=0.0),
                                        dict(theta=-2.0), dict(mu=float('inf'))])
    def test_invalid_parameters(self, kwargs):
        with pytest.raises(ParameterDomainError):
            UgParams(**kwargs)

    def test_two_param_validation(self):
        with pytest.raises(ParameterDomainError):
            UgTwoParam(alpha=0.0, theta=1.0)
        with pytest.raises(ParameterDomainError):
            UgTwoParam(alpha=1.0, theta=-1.0)

    def test_standardize_round_trip(self):
        p = UgParams(mu=2.0, sigma=3.0, theta=1.5)
        assert p.support == (2.0, 5.0)
        np.testing.assert_allclose(p.from_standard(p.standardize([2.5, 4.0])), [2.5, 4.0])


class TestThreeParameterForm:

    @pytest.mark.parametrize('theta', [0.75, 1.5, 4.5])
    def test_cdf_inverts_quantile(self, theta):
        p = UgParams(mu=-1.0, sigma=2.0, theta=theta)
        u = np.linspace(0.001, 0.999, 101)
        np.testing.assert_allclose(cdf(quantile(u, p), p), u, rtol=1e-12, atol=1e-14)

    @pytest.mark.parametrize('theta', [0.75, 2.5])
    def test_pdf_integrates_to_one(self, theta):
        p = UgParams(mu=0.5, sigma=2.0, theta=theta)
        total, _ = integrate.quad(lambda x: pdf(x, p), 0.5, 2.5, limit=200)
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_pdf_is_cdf_derivative(self):
        p = UgParams(mu=0.0, sigma=1.0, theta=1.5)
        x, h = 0.4, 1e-6
        assert pdf(x, p) == pytest.approx((cdf(x + h, p) - cdf(x - h, p)) / (2 * h), rel=1e-6)

    def test_support_edges(self):
        p = UgParams(mu=1.0, sigma=2.0, theta=1.5)
        assert cdf(1.0, p) == 0.0
        assert cdf(3.0, p) == 1.0
        assert pdf(0.5, p) == 0.0
        assert pdf(3.5, p) == 0.0
        assert pdf(1.0, p) == 0.0
        # left limit at the upper endpoint
        assert pdf(3.0, p) == pytest.approx(1.5 / 2.0)

    def test_vector_shape_is_kept(self):
        p = UgParams(theta=2.0)
        assert pdf(np.full((2, 3), 0.5), p).shape == (2, 3)
        assert isinstance(cdf(0.5, p), float)

    def test_quantile_rejects_endpoints(self):
        with pytest.raises(ParameterDomainError):
            quantile([0.0, 0.5], UgParams())
        with pytest.raises(ParameterDomainError):
            quantile(1.0, UgParams())

    def test_sample_in_support_and_reproducible(self):
        p = UgParams(mu=2.0, sigma=0.5, theta=0.75)
        draws = sample(10000, p, seed=7)
        assert np.all((draws > 2.0) & (draws <= 2.5))
        np.testing.assert_array_equal(draws, sample(10000, p, seed=7))

    def test_sample_mean_matches_exact_moment(self):
        # the first lower 1-record is the first observation itself
        theta = 1.5
        draws = sample(200000, UgParams.standard(theta), seed=11)
        standard_error = draws.std(ddof=1) / math.sqrt(draws.size)
        assert abs(draws.mean() - single_moment(1, 1, 1, theta)) < 4 * standard_error


class TestTwoParameterForm:

    def test_unit_alpha_matches_standard_form(self):
        x = np.linspace(0.05, 0.95, 19)
        np.testing.assert_allclose(cdf_two_param(x, UgTwoParam(1.0, 2.5)), cdf(x, UgParams.standard(2.5)))
        np.testing.assert_allclose(pdf_two_param(x, UgTwoParam(1.0, 2.5)), pdf(x, UgParams.standard(2.5)))

    def test_log_likelihood_is_sum_of_log_densities(self):
        x = np.array([0.2, 0.35, 0.5, 0.9])
        p = UgTwoParam(alpha=0.4, theta=1.7)
        assert log_likelihood(x, p) == pytest.approx(np.log(pdf_two_param(x, p)).sum(), rel=1e-12)

    def test_data_validation(self):
        with pytest.raises(InsufficientDataError):
            log_likelihood([0.5], UgTwoParam(1.0, 1.0))
        with pytest.raises(ParameterDomainError):
            fit_mle([0.2, 0.5, 1.2])
        with pytest.raises(ParameterDomainError):
            fit_mle([0.0, 0.5, 0.7])


class TestMaximumLikelihood:

    def test_recovers_parameters(self):
        data = two_param_sample(alpha=0.5, theta=2.0, size=5000, seed=3)
        fitted = fit_mle(data)
        assert fitted.alpha == pytest.approx(0.5, rel=0.1)
        assert fitted.theta == pytest.approx(2.0, rel=0.1)

    def test_covid_fit_is_a_local_maximum(self, covid_data):
        fitted = fit_mle(covid_data)
        _, gradient, _ = _score_and_hessian(np.log(covid_data), math.log(fitted.alpha), math.log(fitted.theta))
        assert np.linalg.norm(gradient) <= 1e-8
        assert fitted.alpha == pytest.approx(0.226, abs=0.01)
        assert fitted.theta == pytest.approx(1.603, abs=0.02)
        best = log_likelihood(covid_data, fitted)
        for d_alpha in (-0.01, 0.0, 0.01):
            for d_theta in (-0.05, 0.0, 0.05):
                if d_alpha == d_theta == 0.0:
                    continue
                other = UgTwoParam(fitted.alpha + d_alpha, fitted.theta + d_theta)
                assert log_likelihood(covid_data, other) < best
