import math

import numpy as np
import pytest

from src.constants import CONTINUITY_TOL, IDENTITY_TOL, KKT_TOL
from src.grf import (
    e2_beta,
    e2_prime_bound,
    e2_second_exponent,
    gap_function,
    grf,
    grf_curve,
    inactive_multipliers,
    kkt_residual,
    moment_bound,
    neg_grf_array,
    rate_gap_sup,
    stationary_points,
    uniform_grid,
    upper_bound,
    waterfill,
    waterfill_gains,
)
from src.spectra import DomainError, eta_max, intervals, new_spectrum


class TestGrf:
    def test_rank_one_closed_form(self):
        s = new_spectrum([1.0])
        assert grf(s, 0.5).neg_grf == pytest.approx(2 * math.log(0.5), rel=1e-14)

    def test_second_interval(self, three_mode_spectrum):
        point = grf(three_mode_spectrum, 1.0)
        assert point.k == 2
        expected = 2 * (2 * math.log(0.245) - math.log(0.49))
        assert point.neg_grf == pytest.approx(expected)

    def test_symmetric_in_x(self, three_mode_spectrum):
        assert grf(three_mode_spectrum, -0.8).neg_grf == grf(three_mode_spectrum, 0.8).neg_grf

    def test_zero_is_boundary_value(self, three_mode_spectrum):
        point = grf(three_mode_spectrum, 0.0)
        assert (point.neg_grf, point.k) == (0.0, 0)

    def test_eta_max_is_minus_infinity(self, three_mode_spectrum):
        assert grf(three_mode_spectrum, eta_max(three_mode_spectrum)).neg_grf == -math.inf

    def test_beyond_eta_max(self, three_mode_spectrum):
        with pytest.raises(DomainError):
            grf(three_mode_spectrum, 1.6)

    def test_curve_header_fields_and_order(self, three_mode_spectrum):
        grid = uniform_grid(three_mode_spectrum, 1000)
        curve = grf_curve(three_mode_spectrum, grid)
        assert len(curve) == 1000
        assert 0 < curve.xs[0] and curve.xs[-1] < eta_max(three_mode_spectrum)
        np.testing.assert_array_equal(curve.xs, grid)
        assert np.all(np.diff(curve.neg_grf) < 0)

    def test_array_form_matches_scalar(self, three_mode_spectrum):
        xs = np.concatenate([[0.0], uniform_grid(three_mode_spectrum, 200), [-0.7]])
        expected = [grf(three_mode_spectrum, x).neg_grf for x in xs]
        np.testing.assert_allclose(neg_grf_array(three_mode_spectrum, xs), expected, rtol=1e-12, atol=1e-14)

    def test_strictly_decreasing(self, verify_spectra, random_spectra):
        for s in [*verify_spectra, *random_spectra(10, 0.2, 2.0)]:
            values = neg_grf_array(s, uniform_grid(s, 10_000))
            assert np.all(np.diff(values) < 0)

    def test_array_form_rejects_out_of_range(self, three_mode_spectrum):
        with pytest.raises(DomainError):
            neg_grf_array(three_mode_spectrum, np.array([0.1, 1.6]))


class TestIdentityAndContinuity:
    def test_grf_is_twice_waterfill_value(self, verify_spectra, np_rng):
        for s in verify_spectra:
            for x in np_rng.uniform(0, eta_max(s), 100):
                left = grf(s, x).neg_grf
                right = 2 * waterfill(s, x).j_value
                assert abs(left - right) <= IDENTITY_TOL * abs(right)

    def test_continuous_across_boundaries(self, verify_spectra, random_spectra):
        for s in [*verify_spectra, *random_spectra(20, 0.2, 2.0)]:
            b = intervals(s).boundaries
            for k in range(1, s.r):
                if b[k] <= b[k - 1]:
                    continue
                left = grf(s, b[k]).neg_grf
                right = grf(s, np.nextafter(b[k], math.inf)).neg_grf
                assert abs(left - right) < CONTINUITY_TOL

    def test_gap_function_is_concave(self, three_mode_spectrum):
        xs = uniform_grid(three_mode_spectrum, 500)
        values = np.array([gap_function(three_mode_spectrum, x) for x in xs])
        assert np.all(np.diff(values, 2) < 1e-9)


class TestWaterfill:
    def test_three_mode_spectrum_allocation(self, three_mode_spectrum):
        solution = waterfill(three_mode_spectrum, 1.0)
        assert solution.s == 2
        assert solution.mu_inv == pytest.approx(0.245)
        np.testing.assert_allclose(solution.p, [0.755, 0.5, 0.0], atol=1e-14)
        assert solution.j_value == pytest.approx(math.log(0.245) + math.log(0.5))

    def test_constraint_holds(self, verify_spectra, np_rng):
        for s in verify_spectra:
            for x in np_rng.uniform(0, eta_max(s), 50):
                solution = waterfill(s, x)
                assert float(np.dot(s.squared, solution.p)) == pytest.approx(x)
                assert all(0 <= p < 1 for p in solution.p)

    def test_kkt_residual(self, verify_spectra, np_rng):
        for s in verify_spectra:
            for x in np_rng.uniform(0, eta_max(s), 50):
                assert kkt_residual(waterfill(s, x), s) < KKT_TOL

    def test_inactive_multipliers_are_positive(self, three_mode_spectrum):
        solution = waterfill(three_mode_spectrum, 1.0)
        (delta,) = inactive_multipliers(solution, three_mode_spectrum)
        assert delta == pytest.approx(1 - 0.04 / 0.245)

    def test_full_saturation(self, three_mode_spectrum):
        solution = waterfill(three_mode_spectrum, eta_max(three_mode_spectrum))
        assert solution.p == (1.0, 1.0, 1.0)
        assert solution.j_value == -math.inf
        with pytest.raises(DomainError):
            kkt_residual(solution, three_mode_spectrum)

    @pytest.mark.parametrize("x", [0.0, -0.1, 1.6])
    def test_outside_domain(self, three_mode_spectrum, x):
        with pytest.raises(DomainError):
            waterfill(three_mode_spectrum, x)

    def test_gains_must_be_sorted(self):
        with pytest.raises(DomainError):
            waterfill_gains([0.5, 1.0], 0.3)

    def test_gains_match_spectrum_form(self, three_mode_spectrum):
        by_gains = waterfill_gains(three_mode_spectrum.squared, 0.9)
        assert by_gains == waterfill(three_mode_spectrum, 0.9)


class TestUpperBound:
    def test_dominates_and_is_loose(self, three_mode_spectrum):
        curve = grf_curve(three_mode_spectrum, uniform_grid(three_mode_spectrum, 1000))
        gaps = curve.upper_bounds - curve.neg_grf
        assert np.all(gaps >= -1e-12)
        assert np.max(gaps) > 0.1

    def test_dominates_on_dense_grids(self, verify_spectra, random_spectra):
        for s in [*verify_spectra, *random_spectra(10, 0.2, 2.0)]:
            xs = uniform_grid(s, 10_000)
            bound = np.log1p(-xs / eta_max(s))
            assert np.all(neg_grf_array(s, xs) <= bound + 1e-12)

    def test_value(self):
        assert upper_bound(new_spectrum([1.0, 1.0]), 1.0) == pytest.approx(math.log(0.5))

    def test_domain(self, three_mode_spectrum):
        with pytest.raises(DomainError):
            upper_bound(three_mode_spectrum, eta_max(three_mode_spectrum))


class TestRateGap:
    def test_rank_one_stationary_value(self):
        s = new_spectrum([1.2])
        assert rate_gap_sup(s, 0.01) == pytest.approx(0.88 - 2 * math.log(1.44), abs=1e-12)
        assert stationary_points(s) == [(1, pytest.approx(0.44))]

    def test_negative_below_the_transition(self, random_spectra):
        for s in random_spectra(50, 0.1, 0.99):
            assert rate_gap_sup(s, 1e-4) < 0

    def test_positive_above_the_transition(self, random_spectra):
        for s in random_spectra(50, 1.01, 2.0):
            assert rate_gap_sup(s, 1e-4) > 0

    def test_no_stationary_point_below_one(self):
        assert stationary_points(new_spectrum([0.9, 0.5])) == []

    def test_matches_dense_grid(self, random_spectra):
        for s in random_spectra(10, 0.5, 2.0):
            xs = np.linspace(0.05, eta_max(s), 20001)[:-1]
            dense = float(np.max(2 * xs + neg_grf_array(s, xs)))
            assert rate_gap_sup(s, 0.05) >= dense - 1e-12
            assert rate_gap_sup(s, 0.05) == pytest.approx(dense, abs=1e-5)

    @pytest.mark.parametrize("epsilon", [0.0, 1.53, 2.0])
    def test_epsilon_domain(self, three_mode_spectrum, epsilon):
        with pytest.raises(DomainError):
            rate_gap_sup(three_mode_spectrum, epsilon)


class TestMomentBounds:
    def test_moment_bound_value(self):
        assert moment_bound(new_spectrum([0.9])) == pytest.approx(2.90782, abs=1e-5)

    def test_moment_bound_uses_rank_squared(self):
        expected = (1 / (1 - 0.5**4)) ** 4
        assert moment_bound(new_spectrum([0.5, 0.3])) == pytest.approx(expected)

    def test_rank_two_example(self):
        assert moment_bound(new_spectrum([0.9, 0.5])) == pytest.approx((1 / 0.3439) ** 4)

    def test_e2_prime_bound_example(self):
        s = new_spectrum([0.9])
        assert e2_beta(s, 0.05) == pytest.approx(0.0415125)
        assert e2_prime_bound(s, 0.05) == pytest.approx(1 / (0.9584875**2 - 0.6561))

    def test_e2_prime_bound_tends_to_moment_bound(self):
        s = new_spectrum([0.9])
        assert e2_prime_bound(s, 1e-9) == pytest.approx(moment_bound(s), rel=1e-6)

    @pytest.mark.parametrize("values", [[0.9], [0.5, 0.3], [0.8, 0.6, 0.1]])
    def test_e2_prime_bound_increases_with_delta(self, values):
        s = new_spectrum(values)
        bounds = [e2_prime_bound(s, delta) for delta in np.linspace(0.005, 0.1, 20)]
        assert np.all(np.diff(bounds) > 0)
        assert bounds[0] > moment_bound(s)

    def test_moment_bound_domain(self):
        with pytest.raises(DomainError, match="lambda_1 < 1"):
            moment_bound(new_spectrum([1.0]))

    def test_e2_prime_bound_value(self):
        s = new_spectrum([0.5])
        beta = e2_beta(s, 0.05)
        assert beta == pytest.approx(0.5 * 0.05 * 2.05 * 0.25)
        expected = 1 / ((1 - beta) ** 2 - 0.0625)
        assert e2_prime_bound(s, 0.05) == pytest.approx(expected)

    @pytest.mark.parametrize(
        "values, delta, message",
        [
            ([1.1], 0.1, "lambda_1 < 1"),
            ([0.5], 0.0, "0 < delta < 1"),
            ([0.5], 1.0, "0 < delta < 1"),
            ([0.99], 0.9, "beta < 1"),
            ([0.95], 0.2, r"\(1 - beta\)\^2"),
        ],
    )
    def test_e2_prime_bound_names_the_violation(self, values, delta, message):
        with pytest.raises(DomainError, match=message):
            e2_prime_bound(new_spectrum(values), delta)

    def test_second_exponent(self):
        assert e2_second_exponent(0.5, 0.05) == pytest.approx(-0.025)
        assert e2_second_exponent(0.1, 0.05) > 0
