import dataclasses
import itertools

import numpy as np
import pytest

from modules.linear_estimation import blue_coefficients, round_coefficients, blue_estimate
from modules.moments import build_moment_table
from modules import prediction
from modules.prediction import prediction_setup, blup, mspe_blup, v4, blip_and_mspe, predict, prediction_rec
from modules.record_engine import simulate_standard_record_matrix
from modules.utils.const import THETA_GRID, N_GRID
from modules.utils.errors import ConditioningError, DimensionError, InsufficientDataError

COVID_TWO_RECORDS = [0.2557, 0.2508, 0.2463, 0.2012]


@pytest.fixture(scope='module')
def covid_setup():
    setup = prediction_setup(4, 2, 1.5)
    return setup, blue_coefficients(setup.table)


class TestSetup:

    def test_uses_next_record_moments(self, covid_setup):
        setup, _ = covid_setup
        assert setup.alpha_next == pytest.approx(0.45806, abs=5e-5)
        np.testing.assert_allclose(setup.omega, [0.00566, 0.00806, 0.00902, 0.00931], atol=5e-5)
        extended = build_moment_table(5, 2, 1.5)
        assert setup.var_next == extended.B[4, 4]

    def test_needs_two_records(self):
        with pytest.raises(InsufficientDataError):
            prediction_setup(1, 2, 1.5)


class TestPredictors:

    def test_worked_example(self, covid_setup):
        setup, coeffs = covid_setup
        result = predict(COVID_TWO_RECORDS, setup.rounded(5), round_coefficients(coeffs))
        assert result.blup == pytest.approx(0.188666, abs=5e-7)
        assert result.blip == pytest.approx(0.1911442, abs=5e-7)
        assert result.v4 == pytest.approx(-0.01341, abs=5e-5)

    def test_rounded_setup(self, covid_setup):
        setup, coeffs = covid_setup
        rounded = setup.rounded(5)
        assert rounded.alpha_next == round(setup.alpha_next, 5)
        np.testing.assert_array_equal(rounded.omega, np.round(setup.omega, 5))
        np.testing.assert_array_equal(rounded.table.B, np.round(setup.table.B, 5))
        assert v4(rounded, coeffs) == round(v4(rounded, coeffs), 5)
        assert setup.digits is None

    def test_worked_example_mspe(self, covid_setup):
        # printed example MSPEs (0.001251258, 0.001099848) disagree with the formulas; these
        # values agree with the simulated EMSPEs of the same grid point
        setup, coeffs = covid_setup
        result = predict(COVID_TWO_RECORDS, setup, coeffs, sigma_estimate=0.5)
        assert result.mspe_blup == pytest.approx(0.003479, rel=2e-3)
        assert result.mspe_blip == pytest.approx(0.003328, rel=2e-3)
        assert result.mspe_blup_scaled == pytest.approx(0.25 * result.mspe_blup)
        assert result.rec == pytest.approx(result.mspe_blup / result.mspe_blip)

    def test_blip_mspe_identity(self):
        for k, theta, n in itertools.product((1, 2, 3), THETA_GRID, (2, 4, 6)):
            setup = prediction_setup(n, k, theta)
            coeffs = blue_coefficients(setup.table)
            _, mspe = blip_and_mspe(0.0, 0.0, setup, coeffs)
            shift = v4(setup, coeffs)
            assert mspe == pytest.approx(mspe_blup(setup, coeffs) - shift ** 2 / (1 + coeffs.V2), rel=1e-9)
            assert 0 < mspe <= mspe_blup(setup, coeffs)

    def test_blip_shifts_blup(self, covid_setup):
        setup, coeffs = covid_setup
        unbiased = blup(COVID_TWO_RECORDS, setup, coeffs)
        _, sigma_star = blue_estimate(COVID_TWO_RECORDS, coeffs)
        invariant, _ = blip_and_mspe(unbiased, sigma_star, setup, coeffs)
        assert invariant == pytest.approx(unbiased - v4(setup, coeffs) / (1 + coeffs.V2) * sigma_star)

    def test_predicting_the_means(self):
        setup = prediction_setup(3, 1, 2.5)
        coeffs = blue_coefficients(setup.table)
        assert blup(setup.table.alpha, setup, coeffs) == pytest.approx(setup.alpha_next, abs=1e-10)

    def test_blup_is_unbiased(self):
        setup = prediction_setup(3, 2, 1.5)
        coeffs = blue_coefficients(setup.table)
        z = simulate_standard_record_matrix(1.5, 2, 4, 10000, np.random.default_rng(8))
        errors = np.array([blup(row[:3], setup, coeffs) for row in z]) - z[:, 3]
        assert abs(errors.mean()) < 4 * errors.std(ddof=1) / np.sqrt(errors.size)
        assert np.mean(errors ** 2) == pytest.approx(mspe_blup(setup, coeffs), rel=0.1)

    def test_dimension_mismatch(self, covid_setup):
        setup, coeffs = covid_setup
        with pytest.raises(DimensionError):
            blup([0.3, 0.2], setup, coeffs)
        with pytest.raises(DimensionError):
            v4(setup, blue_coefficients(build_moment_table(3, 2, 1.5)))


class TestRelativeEfficiency:

    def test_first_order_block(self, table8):
        for row in table8[table8['k'] == 1].itertuples():
            assert prediction_rec(int(row.n), 1, float(row.theta)) == pytest.approx(row.rec, abs=5e-5)

    def test_above_one(self):
        for k, theta, n in itertools.product((1, 2, 3), THETA_GRID, N_GRID):
            assert prediction_rec(n, k, theta) > 1.0


class TestSolverSharing:

    def test_one_factorization_per_call(self, covid_setup, monkeypatch):
        setup, coeffs = covid_setup
        built = []

        class CountingSolver(prediction.SpdSolver):
            def __init__(self, table):
                built.append(table.n)
                super().__init__(table)

        monkeypatch.setattr(prediction, 'SpdSolver', CountingSolver)
        blip_and_mspe(0.2, 0.2, setup, coeffs)
        assert built == [4]

    def test_nonpositive_blip_mspe(self, covid_setup):
        setup, coeffs = covid_setup
        broken = dataclasses.replace(setup, var_next=-1.0)
        with pytest.raises(ConditioningError):
            blip_and_mspe(0.2, 0.2, broken, coeffs)
