import math

import numpy as np
import pytest
from scipy import integrate, special

from modules.utils.errors import ParameterDomainError
from modules.utils.special_functions import upper_incomplete_gamma, compensated_sum, cancellation_ratio, \
    binomial, factorial


def gamma_by_quadrature(a: float, x: float) -> float:
    value, _ = integrate.quad(lambda t: t ** (a - 1) * math.exp(-t), x, np.inf, epsabs=0, epsrel=1e-13,
                              limit=200)
    return value


class TestUpperIncompleteGamma:

    @pytest.mark.parametrize('a', [-5.0, -4.5, -3.2, -2.0, -1.3333333333333333, -1.0, -0.5, 0.0,
                                   0.25, 1.0, 2.5, 5.0])
    @pytest.mark.parametrize('x', [0.5, 1.0, 2.0, 3.0])
    def test_matches_quadrature(self, a, x):
        assert upper_incomplete_gamma(a, x) == pytest.approx(gamma_by_quadrature(a, x), rel=1e-10)

    def test_order_zero_is_exponential_integral(self):
        for x in (0.3, 1.0, 2.0, 3.0):
            assert upper_incomplete_gamma(0.0, x) == pytest.approx(special.exp1(x), rel=1e-13)

    def test_recurrence_in_order(self):
        # Gamma(a + 1, x) = a Gamma(a, x) + x^a e^-x
        for a in (-3.7, -1.5, -0.2):
            for x in (0.7, 2.0):
                lhs = upper_incomplete_gamma(a + 1, x)
                rhs = a * upper_incomplete_gamma(a, x) + x ** a * math.exp(-x)
                assert lhs == pytest.approx(rhs, rel=1e-11)

    @pytest.mark.parametrize('x', [0.0, -1.0, float('nan'), float('inf')])
    def test_rejects_bad_limit(self, x):
        with pytest.raises(ParameterDomainError):
            upper_incomplete_gamma(1.0, x)


class TestSums:

    def test_compensated_sum_recovers_cancelled_digits(self):
        assert compensated_sum([1e16, 1.0, -1e16]) == 1.0

    def test_cancellation_ratio(self):
        assert cancellation_ratio([1e6, -1e6 + 1], 1.0) == pytest.approx(1e6)
        assert cancellation_ratio([0.0, 0.0], 0.0) == 1.0
        assert math.isinf(cancellation_ratio([1.0, -1.0], 0.0))

    def test_binomial_and_factorial(self):
        assert binomial(5, 2) == 10.0
        assert factorial(6) == 720.0
        assert binomial(30, 15) == pytest.approx(math.comb(30, 15), rel=1e-12)
        assert factorial(25) == pytest.approx(math.factorial(25), rel=1e-12)
