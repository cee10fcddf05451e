import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

import dpacct
from dpacct import (
    ConfigError,
    EpsDeltaCurve,
    GaussianPair,
    NoSolution,
    Rounding,
    gd_step_mu,
    gdp_compose,
    gdp_curve,
    gdp_delta,
    gdp_eps,
)

# High-precision normal-CDF oracle values (mpmath, 50 digits), frozen before
# the implementation existed.
DELTA_MU1_EPS0 = 0.38292492254802620728
DELTA_MU1_EPS1 = 0.1269367375066439458


class TestGdpDelta:
    def test_oracle_value_at_eps_zero(self):
        assert gdp_delta(1.0, 0.0) == pytest.approx(DELTA_MU1_EPS0, abs=1e-12)

    def test_oracle_value_at_eps_one(self):
        assert gdp_delta(1.0, 1.0) == pytest.approx(DELTA_MU1_EPS1, abs=1e-12)

    def test_zero_budget_conventions(self):
        assert gdp_delta(0.0, 2.0) == 0.0
        assert gdp_delta(0.0, 0.0) == 0.0
        assert gdp_delta(0.0, -1.0) == pytest.approx(1.0 - np.exp(-1.0), abs=1e-15)

    def test_deep_tail_accuracy(self):
        # log-domain evaluation keeps relative accuracy where naive
        # subtraction would return garbage; below the subnormal range the
        # linear value underflows to zero but the log stays finite
        log_val = dpacct.gdp.gdp_log_delta(0.5, 20.0)
        assert np.isfinite(log_val) and log_val < -700
        assert gdp_delta(1.5, 10.0) == pytest.approx(np.exp(dpacct.gdp.gdp_log_delta(1.5, 10.0)))
        assert gdp_delta(1.5, 10.0) > 0

    def test_vectorized(self):
        eps = np.array([0.0, 0.5, 1.0])
        np.testing.assert_allclose(
            gdp_delta(1.0, eps), [gdp_delta(1.0, e) for e in eps], rtol=0, atol=0
        )

    @settings(max_examples=200, deadline=None)
    @given(mu=st.floats(0.01, 5.0), eps=st.floats(0.0, 10.0), bump=st.floats(1e-6, 1.0))
    def test_strictly_decreasing_in_eps(self, mu, eps, bump):
        lo, hi = gdp_delta(mu, eps + bump), gdp_delta(mu, eps)
        assume(hi > 1e-300)
        assert lo < hi

    @settings(max_examples=200, deadline=None)
    @given(mu=st.floats(0.01, 4.0), eps=st.floats(0.0, 5.0), bump=st.floats(1e-6, 1.0))
    def test_strictly_increasing_in_mu(self, mu, eps, bump):
        lo, hi = gdp_delta(mu, eps), gdp_delta(mu + bump, eps)
        assume(lo > 1e-300)
        assert hi > lo

    def test_invalid_mu(self):
        with pytest.raises(ConfigError):
            gdp_delta(-0.1, 0.0)


class TestGdpEps:
    def test_round_trip_of_delta_example(self):
        delta = gdp_delta(1.0, 1.0)
        assert gdp_eps(1.0, delta) == pytest.approx(1.0, abs=1e-6)

    def test_tolerance_on_delta(self):
        eps = gdp_eps(1.3, 1e-7)
        assert abs(gdp_delta(1.3, eps) - 1e-7) <= 1e-12

    def test_section_4_1_comparison(self):
        # 500 full-budget iterations at sigma=100 stay below the 420-step
        # worst-case epsilon computed through the Renyi baseline.
        from dpacct import gaussian_rdp, rdp_to_eps

        gdp_500 = gdp_eps(np.sqrt(500) / 100, 1e-5)
        rdp_420 = rdp_to_eps(gaussian_rdp(np.sqrt(420) / 100), 1e-5).epsilon
        assert gdp_500 < rdp_420

    def test_degenerate_budget_returns_zero(self):
        assert gdp_eps(0.0, 0.5) == 0.0

    def test_loose_target_returns_zero(self):
        # delta(0) for mu -> 0+ is tiny, so any moderate delta is already met
        assert gdp_eps(1e-9, 0.5) == 0.0

    def test_no_solution_outside_unit_interval(self):
        with pytest.raises(NoSolution):
            gdp_eps(1.0, 1.0)
        with pytest.raises(NoSolution):
            gdp_eps(1.0, 0.0)

    @settings(max_examples=150, deadline=None)
    @given(mu=st.floats(0.01, 5.0), eps=st.floats(0.0, 10.0))
    def test_round_trip_property(self, mu, eps):
        delta = gdp_delta(mu, eps)
        assume(1e-300 < delta < 1.0)
        assert gdp_eps(mu, delta) == pytest.approx(eps, abs=1e-9)


class TestComposition:
    def test_pythagorean(self):
        assert gdp_compose([3.0, 4.0]) == pytest.approx(5.0, abs=1e-15)

    def test_empty(self):
        assert gdp_compose([]) == 0.0

    def test_hundred_small_steps(self):
        assert gdp_compose([0.1] * 100) == pytest.approx(1.0, abs=1e-12)

    def test_composition_matches_fft_two_fold(self):
        # Cross-module oracle: two-fold Gaussian composition through the FFT
        # engine agrees with the closed-form root-sum-of-squares curve.
        mu = 0.4
        pld = dpacct.discretize(GaussianPair(mu, 1.0), dpacct.DEFAULT_GRID, Rounding.CENTER)
        composed = dpacct.compose_fft([(pld, 2)])
        total = gdp_compose([mu, mu])
        for eps in (0.0, 0.3, 1.0):
            assert dpacct.delta_from_pld(composed, eps) == pytest.approx(
                gdp_delta(total, eps), abs=1e-6
            )


class TestGdStepMu:
    def test_direct_quotients(self):
        assert gd_step_mu(2.5, 5.0) == 0.5
        assert gd_step_mu(0.0, 5.0) == 0.0
        assert gd_step_mu(1.0, 100.0) == pytest.approx(0.01, abs=1e-18)

    def test_invalid_inputs(self):
        with pytest.raises(ConfigError):
            gd_step_mu(-1.0, 1.0)
        with pytest.raises(ConfigError):
            gd_step_mu(1.0, 0.0)


class TestEpsDeltaCurve:
    def test_valid_curve(self):
        curve = gdp_curve(1.0, [0.0, 0.5, 1.0, 2.0])
        assert curve.delta[0] == pytest.approx(DELTA_MU1_EPS0, abs=1e-12)
        assert np.all(np.diff(curve.delta) <= 0)

    def test_rejects_increasing_delta(self):
        with pytest.raises(ConfigError):
            EpsDeltaCurve(eps=np.array([0.0, 1.0]), delta=np.array([0.1, 0.2]))

    def test_rejects_out_of_range_delta(self):
        with pytest.raises(ConfigError):
            EpsDeltaCurve(eps=np.array([0.0, 1.0]), delta=np.array([1.5, 0.2]))

    def test_rejects_unsorted_eps(self):
        with pytest.raises(ConfigError):
            EpsDeltaCurve(eps=np.array([1.0, 0.0]), delta=np.array([0.2, 0.1]))
