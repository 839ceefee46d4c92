import itertools

import numpy as np
import pytest

from modules.moments import single_moment, product_moment, covariance, mean_and_variance, build_moment_table, \
    recurrence_residual_single, recurrence_residual_product, moment_table_frame, covariance_frame, \
    _single_moment_quad, _product_moment_quad
from modules.utils.const import THETA_GRID
from modules.utils.errors import ParameterDomainError


class TestPublishedTables:

    def test_means(self, table1):
        frame = moment_table_frame()
        assert len(frame) == 90
        merged = frame.merge(table1, on=['k', 'n', 'theta'], suffixes=('', '_published'))
        assert len(merged) == 90
        np.testing.assert_allclose(merged['mean'], merged['mean_published'], atol=5e-5)

    def test_covariances(self, table2):
        frame = covariance_frame()
        assert len(frame) == 315
        merged = frame.merge(table2, on=['k', 'm', 'n', 'theta'], suffixes=('', '_published'))
        assert len(merged) == 315
        np.testing.assert_allclose(merged['cov'], merged['cov_published'], atol=5e-5)


class TestMomentProperties:

    def test_zero_order(self):
        assert single_moment(0, 3, 2, 1.5) == 1.0
        assert product_moment(0, 0, 1, 3, 2, 1.5) == 1.0

    def test_means_decrease_in_n(self):
        for k, theta in itertools.product((1, 2, 3), THETA_GRID):
            means = [single_moment(1, n, k, theta) for n in range(1, 7)]
            assert all(a > b for a, b in zip(means, means[1:]))
            assert 0 < means[-1] < means[0] < 1

    def test_covariance_symmetry_and_diagonal(self):
        assert covariance(2, 4, 2, 1.5) == covariance(4, 2, 2, 1.5)
        assert covariance(3, 3, 2, 1.5) == pytest.approx(mean_and_variance(3, 2, 1.5)[1])

    def test_table_is_positive_definite_and_frozen(self):
        table = build_moment_table(6, 3, 0.75)
        assert np.all(np.linalg.eigvalsh(table.B) > 0)
        np.testing.assert_array_equal(table.B, table.B.T)
        with pytest.raises(ValueError):
            table.alpha[0] = 0.0
        assert build_moment_table(6, 3, 0.75) is table

    def test_rounded_table(self):
        table = build_moment_table(4, 2, 1.5).rounded(5)
        np.testing.assert_allclose(table.alpha, [0.7992, 0.6680, 0.57653, 0.50939], atol=1e-12)

    @pytest.mark.parametrize('args', [dict(r=1, n=0, k=1, theta=1.0), dict(r=1, n=2, k=0, theta=1.0),
                                      dict(r=1, n=2, k=1, theta=0.0), dict(r=-1, n=2, k=1, theta=1.0)])
    def test_domain_errors(self, args):
        with pytest.raises(ParameterDomainError):
            single_moment(**args)

    def test_product_needs_ordered_indices(self):
        with pytest.raises(ParameterDomainError):
            product_moment(1, 1, 3, 3, 1, 1.5)
        with pytest.raises(ParameterDomainError):
            product_moment(1, 1, 0, 3, 1, 1.5)


class TestQuadratureOracle:

    @pytest.mark.parametrize('r,n,k,theta', [(1, 1, 1, 0.75), (2, 3, 2, 1.5), (1, 6, 3, 4.5), (0.5, 4, 1, 2.5),
                                             (3, 2, 3, 0.75)])
    def test_single_moment(self, r, n, k, theta):
        assert single_moment(r, n, k, theta) == pytest.approx(_single_moment_quad(r, n, k, theta), abs=1e-7)

    @pytest.mark.parametrize('r,s,m,n,k,theta', [(1, 1, 1, 2, 1, 0.75), (1, 1, 2, 4, 2, 1.5),
                                                 (2, 1, 3, 5, 3, 3.5), (1, 2, 1, 6, 2, 4.5),
                                                 (1, 1, 4, 6, 1, 2.5)])
    def test_product_moment(self, r, s, m, n, k, theta):
        assert product_moment(r, s, m, n, k, theta) == pytest.approx(
            _product_moment_quad(r, s, m, n, k, theta), abs=1e-7)


class TestRecurrences:

    @pytest.mark.parametrize('k', [1, 2, 3])
    @pytest.mark.parametrize('theta', THETA_GRID)
    def test_single(self, k, theta):
        for r, n in itertools.product((1, 2), range(2, 7)):
            assert abs(recurrence_residual_single(r, n, k, theta)) <= 1e-8

    @pytest.mark.parametrize('k', [1, 2, 3])
    @pytest.mark.parametrize('theta', THETA_GRID)
    def test_product(self, k, theta):
        for r, s in itertools.product((1, 2), repeat=2):
            for m, n in ((2, 4), (2, 5), (3, 5), (2, 6), (4, 6)):
                assert abs(recurrence_residual_product(r, s, m, n, k, theta)) <= 1e-8

    def test_product_needs_room(self):
        with pytest.raises(ParameterDomainError):
            recurrence_residual_product(1, 1, 3, 4, 1, 1.5)
