"""Tests for the piecewise-Weibull delayed-effect survival model."""

import numpy as np
import pytest
from scipy import integrate

from dte_design.survival import (
    DTEModel,
    WeibullParams,
    control_hazard,
    control_survival,
    experimental_survival,
    hazard_ratio,
    lambda_e_from_hr,
    sample_control_time,
    sample_experimental_time,
)

TABLE_CONTROL = WeibullParams(rate=0.074, shape=1.21)


def random_model(rng, allow_zero_delay=True):
    ctrl = WeibullParams(rng.uniform(0.02, 0.5), rng.uniform(0.5, 2.5))
    delay = rng.uniform(0.0, 8.0) if allow_zero_delay else rng.uniform(0.5, 8.0)
    if rng.uniform() < 0.15:
        delay = 0.0
    exp_ = WeibullParams(rng.uniform(0.02, 0.5), rng.uniform(0.5, 2.5))
    return DTEModel(ctrl, delay, exp_)


class TestWeibullParams:
    def test_rejects_non_positive(self):
        for rate, shape in [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (1.0, -2.0), (float("nan"), 1.0)]:
            with pytest.raises(ValueError):
                WeibullParams(rate, shape)

    def test_median(self):
        p = WeibullParams(rate=2.0, shape=1.0)
        assert p.median == pytest.approx(np.log(2) / 2.0, rel=1e-12)
        assert control_survival(TABLE_CONTROL.median, TABLE_CONTROL) == pytest.approx(0.5, abs=1e-12)

    def test_delay_must_be_non_negative(self):
        with pytest.raises(ValueError):
            DTEModel(TABLE_CONTROL, -0.1, TABLE_CONTROL)


class TestControlSurvival:
    def test_one_at_zero(self):
        assert control_survival(0.0, WeibullParams(0.3, 0.7)) == 1.0
        assert control_survival(0.0, TABLE_CONTROL) == 1.0

    def test_inverse_rate_point(self):
        for shape in (0.5, 1.0, 1.21, 3.0):
            p = WeibullParams(0.074, shape)
            assert control_survival(1 / 0.074, p) == pytest.approx(np.exp(-1), rel=1e-12)

    def test_table_values(self):
        # exp(-(0.74)^1.21), frozen from 30-digit arithmetic
        assert control_survival(10.0, TABLE_CONTROL) == pytest.approx(0.499245688267109370742, rel=1e-14)

    def test_rejects_negative_time(self):
        with pytest.raises(ValueError):
            control_survival(-1.0, TABLE_CONTROL)
        with pytest.raises(ValueError):
            control_survival(np.array([1.0, -0.5]), TABLE_CONTROL)


class TestControlHazard:
    def test_exponential_is_constant(self):
        p = WeibullParams(0.3, 1.0)
        t = np.linspace(0.0, 50.0, 7)
        assert np.allclose(control_hazard(t, p), 0.3, rtol=1e-14)

    def test_hand_value(self):
        assert control_hazard(2.0, WeibullParams(0.5, 2.0)) == pytest.approx(1.0, rel=1e-14)

    def test_cumulative_hazard_matches_survival(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            p = WeibullParams(rng.uniform(0.05, 0.5), rng.uniform(0.6, 2.5))
            t = rng.uniform(1.0, 30.0)
            integral, _ = integrate.quad(lambda u: control_hazard(u, p), 0.0, t, limit=200)
            assert integral == pytest.approx(-np.log(control_survival(t, p)), abs=1e-8)

    def test_zero_time_rules(self):
        assert control_hazard(0.0, WeibullParams(0.5, 2.0)) == 0.0
        assert control_hazard(0.0, WeibullParams(0.5, 1.0)) == pytest.approx(0.5)
        with pytest.raises(ValueError):
            control_hazard(0.0, WeibullParams(0.5, 0.8))


class TestExperimentalSurvival:
    def test_pre_delay_equals_control(self):
        m = DTEModel(TABLE_CONTROL, 4.0, WeibullParams(0.05, 1.21))
        t = np.linspace(0.0, 4.0, 23)
        assert np.array_equal(experimental_survival(t, m), control_survival(t, TABLE_CONTROL))

    def test_continuity_at_delay(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            m = random_model(rng)
            if m.delay == 0.0:
                continue
            eps = 1e-8
            gap = abs(
                experimental_survival(m.delay - eps, m) - experimental_survival(m.delay + eps, m)
            )
            assert gap < 1e-6

    def test_no_effect_degenerate(self):
        m = DTEModel(TABLE_CONTROL, 0.0, TABLE_CONTROL)
        t = np.linspace(0.0, 60.0, 101)
        assert np.allclose(experimental_survival(t, m), control_survival(t, TABLE_CONTROL), rtol=1e-14)

    def test_monotone_non_increasing(self):
        rng = np.random.default_rng(11)
        t = np.linspace(0.0, 80.0, 10_000)
        for _ in range(25):
            m = random_model(rng)
            s_e = experimental_survival(t, m)
            s_c = control_survival(t, m.control)
            assert np.all(np.diff(s_e) <= 0)
            assert np.all(np.diff(s_c) <= 0)

    def test_hazard_integral_matches_both_sides_of_delay(self):
        # -ln S_e(t) should equal the integrated piecewise hazard
        m = DTEModel(WeibullParams(0.1, 1.4), 5.0, WeibullParams(0.06, 1.8))

        def hazard(t):
            if t <= m.delay:
                return control_hazard(t, m.control)
            return control_hazard(t, m.experimental)

        for t in (2.0, 4.9, 5.1, 12.0, 30.0):
            integral, _ = integrate.quad(hazard, 0.0, t, points=[m.delay], limit=400)
            assert integral == pytest.approx(-np.log(experimental_survival(t, m)), abs=1e-6)


class TestHazardRatio:
    def test_one_before_delay(self):
        m = DTEModel(TABLE_CONTROL, 4.0, WeibullParams(0.05, 1.5))
        assert hazard_ratio(3.0, m) == 1.0

    def test_identical_arms(self):
        m = DTEModel(TABLE_CONTROL, 4.0, TABLE_CONTROL)
        assert hazard_ratio(10.0, m) == pytest.approx(1.0, rel=1e-14)

    def test_round_trip_with_rate_map(self):
        rate_e = lambda_e_from_hr(0.074, 1.21, 0.6)
        m = DTEModel(TABLE_CONTROL, 4.0, WeibullParams(rate_e, 1.21))
        for t in (4.5, 10.0, 25.0):
            assert hazard_ratio(t, m) == pytest.approx(0.6, rel=1e-12)

    def test_constant_after_delay_when_shapes_match(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            ctrl = WeibullParams(rng.uniform(0.05, 0.4), rng.uniform(0.6, 2.2))
            rate_e = lambda_e_from_hr(ctrl.rate, ctrl.shape, rng.uniform(0.3, 0.9))
            m = DTEModel(ctrl, 4.0, WeibullParams(rate_e, ctrl.shape))
            t = np.linspace(4.01, 60.0, 100)
            hr = hazard_ratio(t, m)
            assert np.all(np.abs(hr - hr[0]) < 1e-12)

    def test_rejects_non_positive_time(self):
        m = DTEModel(TABLE_CONTROL, 4.0, TABLE_CONTROL)
        with pytest.raises(ValueError):
            hazard_ratio(0.0, m)


class TestLambdaFromHr:
    def test_identity(self):
        assert lambda_e_from_hr(0.074, 1.21, 1.0) == pytest.approx(0.074, rel=1e-15)

    def test_table_value(self):
        # 0.074 * 0.6^(1/1.21), frozen from 30-digit arithmetic
        assert lambda_e_from_hr(0.074, 1.21, 0.6) == pytest.approx(0.04851607353870909, rel=1e-14)

    def test_linear_when_shape_one(self):
        assert lambda_e_from_hr(1.0, 1.0, 0.5) == pytest.approx(0.5, rel=1e-15)

    def test_exact_hr_recovery(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            lam, gam, hr = rng.uniform(0.02, 0.8), rng.uniform(0.4, 3.0), rng.uniform(0.1, 1.5)
            rate_e = lambda_e_from_hr(lam, gam, hr)
            assert (rate_e / lam) ** gam == pytest.approx(hr, abs=1e-12)

    def test_rejects_bad_hr(self):
        with pytest.raises(ValueError):
            lambda_e_from_hr(0.074, 1.21, 0.0)
        with pytest.raises(ValueError):
            lambda_e_from_hr(0.074, 1.21, -0.5)


class TestSampling:
    def test_control_round_trip(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            p = WeibullParams(rng.uniform(0.02, 0.6), rng.uniform(0.4, 3.0))
            u = rng.uniform(1e-6, 1 - 1e-6, size=100)
            t = sample_control_time(p, u)
            assert np.max(np.abs(control_survival(t, p) - u)) < 1e-9

    def test_control_unit_exponential_point(self):
        assert sample_control_time(WeibullParams(1.0, 1.0), np.exp(-1)) == pytest.approx(1.0, rel=1e-12)

    def test_control_near_one_gives_near_zero(self):
        assert sample_control_time(WeibullParams(0.1, 1.3), 1 - 1e-12) < 1e-6

    def test_control_ks_distance(self):
        rng = np.random.default_rng(13)
        p = WeibullParams(0.074, 1.21)
        t = np.sort(sample_control_time(p, rng.uniform(size=100_000)))
        cdf = 1.0 - control_survival(t, p)
        n = len(t)
        ks = max(np.max(np.arange(1, n + 1) / n - cdf), np.max(cdf - np.arange(n) / n))
        assert ks < 0.01

    def test_experimental_branch_boundary(self):
        m = DTEModel(TABLE_CONTROL, 4.0, WeibullParams(0.0485, 1.21))
        u_at_delay = experimental_survival(4.0, m)
        assert sample_experimental_time(m, u_at_delay) == pytest.approx(4.0, rel=1e-12)

    def test_experimental_no_delay_reduces_to_weibull_inverse(self):
        exp_ = WeibullParams(0.05, 1.4)
        m = DTEModel(WeibullParams(0.1, 1.4), 0.0, exp_)
        u = np.array([0.1, 0.5, 0.9])
        expected = (-np.log(u)) ** (1 / 1.4) / 0.05
        assert np.allclose(sample_experimental_time(m, u), expected, rtol=1e-12)

    def test_experimental_round_trip(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            m = random_model(rng)
            u = rng.uniform(1e-6, 1 - 1e-6, size=100)
            t = sample_experimental_time(m, u)
            assert np.max(np.abs(experimental_survival(t, m) - u)) < 1e-9

    def test_empirical_curve_matches_analytic(self):
        rng = np.random.default_rng(23)
        m = DTEModel(TABLE_CONTROL, 4.0, WeibullParams(0.0485, 1.21))
        samples = sample_experimental_time(m, rng.uniform(size=1_000_000))
        grid = np.array([1.0, 3.0, 4.0, 6.0, 10.0, 20.0, 40.0])
        empirical = np.array([(samples > g).mean() for g in grid])
        analytic = experimental_survival(grid, m)
        assert np.max(np.abs(empirical - analytic)) < 0.002

    def test_rejects_bad_uniforms(self):
        m = DTEModel(TABLE_CONTROL, 4.0, TABLE_CONTROL)
        for bad in (0.0, 1.0, -0.2, 1.3):
            with pytest.raises(ValueError):
                sample_experimental_time(m, bad)
            with pytest.raises(ValueError):
                sample_control_time(TABLE_CONTROL, bad)
