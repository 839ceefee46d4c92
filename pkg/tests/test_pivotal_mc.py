import itertools
import math

import numpy as np
import pandas as pd
import pytest

from modules.linear_estimation import coefficients_for, round_coefficients, linear_estimates
from modules.pivotal_mc import QuantileTable, PivotSimulator, ci_location, ci_scale, pi_next_record, \
    pivots_from_records, order_statistic_band, simulate_pivot_quantiles, write_quantile_tables, \
    read_cached_tables, tables_from_wide_frame, cache_path
from modules.record_engine import simulate_standard_record_matrix
from modules.utils.const import K_GRID, THETA_GRID, N_GRID, DEFAULT_PROBS, PIVOT_IDS
from modules.utils.errors import MissingQuantileError, UndefinedBoundError, ParameterDomainError, DimensionError

COVID_TWO_RECORDS = [0.2557, 0.2508, 0.2463, 0.2012]
PUBLISHED_FILES = {'T1': 'published_table6_t1_t2.csv', 'T2': 'published_table6_t1_t2.csv',
                 'T3': 'published_table7_t3_t4.csv', 'T4': 'published_table7_t3_t4.csv',
                 'T1star': 'published_table9_t1star_t2star.csv', 'T2star': 'published_table9_t1star_t2star.csv'}


@pytest.fixture(scope='module')
def published_tables(pivot_table_paths):
    tables = {}
    for path in pivot_table_paths:
        tables.update(tables_from_wide_frame(pd.read_csv(path), 2, 1.5, 4))
    return tables


@pytest.fixture(scope='module')
def worked_example():
    coeffs = round_coefficients(coefficients_for(4, 2, 1.5))
    return coeffs, linear_estimates(COVID_TWO_RECORDS, coeffs)


class TestQuantileTable:

    def test_lookup(self, published_tables):
        table = published_tables['T1']
        assert table.probs == DEFAULT_PROBS
        assert table.quantile_at(0.975) == 6.8273
        with pytest.raises(MissingQuantileError):
            table.quantile_at(0.9)

    def test_validation(self):
        with pytest.raises(ParameterDomainError):
            QuantileTable('T9', 1.5, 2, 4, 1000, (0.5,), (0.0,))
        with pytest.raises(DimensionError):
            QuantileTable('T1', 1.5, 2, 4, 1000, (0.025, 0.975), (0.0,))


class TestWorkedExampleIntervals:

    def test_location(self, published_tables, worked_example):
        coeffs, estimates = worked_example
        by_t1 = ci_location(estimates, coeffs, published_tables['T1'], 0.95)
        by_t3 = ci_location(estimates, coeffs, published_tables['T3'], 0.95)
        np.testing.assert_allclose([by_t1.lower, by_t1.upper], [-0.3351658, 0.1506618], atol=1e-6)
        np.testing.assert_allclose([by_t3.lower, by_t3.upper], [-0.3351654, 0.1506602], atol=1e-6)
        assert by_t1.target == 'mu' and by_t1.flags == ()

    def test_scale(self, published_tables, worked_example):
        # printed with the bounds in reverse order
        coeffs, estimates = worked_example
        by_t2 = ci_scale(estimates, coeffs, published_tables['T2'], 0.95)
        by_t4 = ci_scale(estimates, coeffs, published_tables['T4'], 0.95)
        np.testing.assert_allclose([by_t2.lower, by_t2.upper], [0.1178024, 0.9661532], atol=1e-6)
        np.testing.assert_allclose([by_t4.lower, by_t4.upper], [0.1178009, 0.966052], atol=1e-6)
        assert by_t2.contains(0.5) and not by_t2.contains(1.0)

    def test_next_record(self, published_tables, worked_example):
        coeffs, estimates = worked_example
        by_t1 = pi_next_record(COVID_TWO_RECORDS, estimates.sigma_blue, published_tables['T1star'], 0.95)
        by_t2 = pi_next_record(COVID_TWO_RECORDS, estimates.sigma_blie, published_tables['T2star'], 0.95)
        np.testing.assert_allclose([by_t1.lower, by_t1.upper], [0.1235971, 0.2009576], atol=1e-6)
        np.testing.assert_allclose([by_t2.lower, by_t2.upper], [0.1236043, 0.2009598], atol=1e-6)
        assert by_t1.contains(0.1954)

    def test_wrong_pivot_or_level(self, published_tables, worked_example):
        coeffs, estimates = worked_example
        with pytest.raises(ParameterDomainError):
            ci_location(estimates, coeffs, published_tables['T2'], 0.95)
        with pytest.raises(MissingQuantileError):
            ci_location(estimates, coeffs, published_tables['T1'], 0.8)
        with pytest.raises(ParameterDomainError):
            pi_next_record(COVID_TWO_RECORDS, 0.2, published_tables['T1'], 0.95)

    def test_nonpositive_scale_denominator(self, worked_example):
        coeffs, estimates = worked_example
        table = QuantileTable('T2', 1.5, 2, 4, 1000, (0.025, 0.975), (-10.0, 2.0))
        with pytest.raises(UndefinedBoundError) as error:
            ci_scale(estimates, coeffs, table, 0.95)
        assert error.value.quantile == -10.0

    def test_reversed_bounds_are_flagged(self, published_tables):
        interval = pi_next_record(COVID_TWO_RECORDS, -0.2, published_tables['T1star'], 0.95)
        assert interval.lower < interval.upper
        assert 'reordered' in interval.flags
        assert interval.raw_bounds[0] > interval.raw_bounds[1]


class TestPivots:

    def test_pivots_at_the_truth(self):
        coeffs = coefficients_for(3, 1, 2.5)
        z = simulate_standard_record_matrix(2.5, 1, 4, 10, np.random.default_rng(0))
        values, sigma_star = pivots_from_records(z, coeffs)
        mu_star = z[:, :3] @ coeffs.a
        np.testing.assert_allclose(values['T1'], mu_star / (sigma_star * math.sqrt(coeffs.V1)))
        np.testing.assert_allclose(values['T4'], values['T2'] - math.sqrt(coeffs.V2), atol=1e-12)
        np.testing.assert_allclose(values['T2star'], (1 + coeffs.V2) * values['T1star'])

    def test_reproducible_and_order_free(self):
        simulator = PivotSimulator({'pivot_reps': 3000, 'chunk_size': 1000})
        first = simulator.simulate(1.5, 2, 3, seed=5)
        second = simulator.simulate(1.5, 2, 3, seed=5)
        for pivot in PIVOT_IDS:
            np.testing.assert_array_equal(first.values[pivot], second.values[pivot])
        assert first.reps == 3000
        other = simulator.simulate(1.5, 2, 3, seed=6)
        assert not np.array_equal(first.values['T1'], other.values['T1'])

    def test_rep_floor(self):
        with pytest.raises(ParameterDomainError):
            simulate_pivot_quantiles('T1', 1.5, 2, 4, reps=500, probs=DEFAULT_PROBS, seed=1)

    def test_single_pivot_helper(self):
        table = simulate_pivot_quantiles('T2star', 1.5, 2, 4, reps=2000, probs=(0.025, 0.975), seed=3)
        assert table.pivot_id == 'T2star' and table.reps == 2000
        assert table.quantiles[0] < table.quantiles[1] < 0

    def test_cache(self, tmp_path):
        simulator = PivotSimulator({'pivot_reps': 1000, 'cache_dir': str(tmp_path)})
        tables = simulator.quantile_tables(0.75, 1, 3, seed=9)
        assert cache_path(tmp_path, 'T1', 1, 0.75, 3).exists()
        cached = read_cached_tables(tmp_path, 0.75, 1, 3, 1000, DEFAULT_PROBS, 9)
        assert cached == tables
        assert simulator.quantile_tables(0.75, 1, 3, seed=9) == tables
        assert read_cached_tables(tmp_path, 0.75, 1, 3, 1000, DEFAULT_PROBS, 10) is None

    def test_write_and_read_layout(self, tmp_path, published_tables):
        write_quantile_tables(published_tables.values(), tmp_path)
        assert len(list(tmp_path.glob('*.csv'))) == 6
        assert cache_path(tmp_path, 'T2star', 2, 1.5, 4).name == 'T2star_2_1.5_4.csv'


class TestOrderStatisticBand:

    def test_band_contains_true_quantile(self):
        samples = np.random.default_rng(4).uniform(size=10000)
        for prob in (0.025, 0.5, 0.975):
            lower, upper = order_statistic_band(samples, prob)
            assert lower <= prob <= upper

    def test_wider_band_for_higher_level(self):
        samples = np.random.default_rng(4).normal(size=2000)
        narrow = order_statistic_band(samples, 0.05, level=0.9)
        wide = order_statistic_band(samples, 0.05, level=0.999)
        assert wide[0] <= narrow[0] and wide[1] >= narrow[1]

    def test_regenerated_point_matches_published(self, fixtures_dir):
        simulator = PivotSimulator({'pivot_reps': 10000})
        sample = simulator.simulate(1.5, 2, 4, seed=20240101)
        inside = 0
        for pivot, name in PUBLISHED_FILES.items():
            printed = tables_from_wide_frame(pd.read_csv(fixtures_dir / name), 2, 1.5, 4)[pivot]
            for prob, value in zip(printed.probs, printed.quantiles):
                lower, upper = order_statistic_band(sample.values[pivot], prob, level=0.999)
                inside += lower - 5e-5 <= value <= upper + 5e-5
        assert inside >= 22

    @pytest.mark.slow
    def test_regenerated_tables_match_published(self, fixtures_dir):
        simulator = PivotSimulator({'pivot_reps': 10000})
        frames = {name: pd.read_csv(fixtures_dir / name) for name in set(PUBLISHED_FILES.values())}
        inside, total = 0, 0
        for k, theta, n in itertools.product(K_GRID, THETA_GRID, N_GRID):
            sample = simulator.simulate(theta, k, n, seed=k * 1000 + n * 10 + int(theta * 2))
            for pivot, name in PUBLISHED_FILES.items():
                printed = tables_from_wide_frame(frames[name], k, theta, n)[pivot]
                for prob, value in zip(printed.probs, printed.quantiles):
                    lower, upper = order_statistic_band(sample.values[pivot], prob)
                    inside += lower - 5e-5 <= value <= upper + 5e-5
                    total += 1
        assert inside / total >= 0.95
