"""Tests for Gamma prior fitting and effect-scenario sampling."""

import numpy as np
import pytest
from scipy import stats

from dte_design.elicitation import (
    EffectPrior,
    GammaDist,
    QuantileJudgements,
    Scenario,
    fit_gamma_to_quantiles,
    gamma_quantile,
    sample_scenario,
)

QUARTILES = (0.25, 0.5, 0.75)


def example_prior():
    return EffectPrior(
        p_separation=0.9,
        p_delay_given_separation=0.7,
        delay_dist=GammaDist(7.29, 1.76),
        hr_dist=GammaDist(29.6, 47.8),
    )


class TestJudgementValidation:
    def test_valid(self):
        j = QuantileJudgements(QUARTILES, (3, 4, 5))
        assert j.quantiles == (3.0, 4.0, 5.0)

    @pytest.mark.parametrize(
        "probs,quants",
        [
            ((0.25, 0.5), (3, 4, 5)),          # length mismatch
            ((0.5,), (4,)),                     # too short
            ((0.25, 0.25, 0.75), (3, 4, 5)),    # probs not increasing
            ((0.25, 0.5, 0.75), (3, 3, 5)),     # equal quantiles
            ((0.25, 0.5, 0.75), (5, 4, 3)),     # decreasing quantiles
            ((0.0, 0.5, 0.75), (3, 4, 5)),      # prob at 0
            ((0.25, 0.5, 1.0), (3, 4, 5)),      # prob at 1
            ((0.25, 0.5, 0.75), (-1, 4, 5)),    # negative quantile
        ],
    )
    def test_invalid(self, probs, quants):
        with pytest.raises(ValueError):
            QuantileJudgements(probs, quants)


class TestGammaFit:
    def test_delay_example(self):
        fit = fit_gamma_to_quantiles(QuantileJudgements(QUARTILES, (3, 4, 5)))
        assert fit.dist.shape == pytest.approx(7.29, abs=0.05)
        assert fit.dist.rate == pytest.approx(1.76, abs=0.02)
        assert fit.feedback_quantiles == pytest.approx((3.03, 3.95, 5.05), abs=0.02)
        assert fit.converged

    def test_hazard_ratio_example(self):
        fit = fit_gamma_to_quantiles(QuantileJudgements(QUARTILES, (0.55, 0.6, 0.7)))
        assert fit.dist.shape == pytest.approx(29.6, abs=0.3)
        assert fit.dist.rate == pytest.approx(47.8, abs=0.4)
        assert fit.feedback_quantiles == pytest.approx((0.54, 0.61, 0.69), abs=0.01)

    def test_recovers_exact_gamma(self):
        true = GammaDist(5.0, 2.0)
        quants = tuple(float(q) for q in true.quantile(np.array(QUARTILES)))
        fit = fit_gamma_to_quantiles(QuantileJudgements(QUARTILES, quants))
        assert fit.dist.shape == pytest.approx(5.0, abs=1e-3)
        assert fit.dist.rate == pytest.approx(2.0, abs=1e-3)
        assert fit.sse < 1e-12

    def test_feedback_equals_fitted_quantiles(self):
        fit = fit_gamma_to_quantiles(QuantileJudgements(QUARTILES, (3, 4, 5)))
        recomputed = tuple(gamma_quantile(fit.dist, p) for p in QUARTILES)
        assert fit.feedback_quantiles == recomputed

    def test_local_minimum_under_perturbation(self):
        rng = np.random.default_rng(31)
        for _ in range(100):
            true = GammaDist(rng.uniform(0.8, 20.0), rng.uniform(0.2, 10.0))
            probs = (0.25, 0.5, 0.75)
            quants = true.quantile(np.array(probs))
            # jitter so the optimum is not an exact-fit zero
            quants = quants * (1 + rng.uniform(-0.03, 0.03, size=3))
            quants = tuple(np.sort(quants))
            try:
                j = QuantileJudgements(probs, quants)
            except ValueError:
                continue
            fit = fit_gamma_to_quantiles(j)

            def sse(a, b):
                return float(np.sum((stats.gamma.cdf(np.array(quants), a, scale=1 / b) - np.array(probs)) ** 2))

            base = sse(fit.dist.shape, fit.dist.rate)
            for fa, fb in [(1.01, 1.0), (0.99, 1.0), (1.0, 1.01), (1.0, 0.99)]:
                assert sse(fit.dist.shape * fa, fit.dist.rate * fb) >= base - 1e-12

    def test_accepts_more_than_three_points(self):
        true = GammaDist(4.0, 1.5)
        probs = (0.1, 0.25, 0.5, 0.75, 0.9)
        quants = tuple(float(q) for q in true.quantile(np.array(probs)))
        fit = fit_gamma_to_quantiles(QuantileJudgements(probs, quants))
        assert fit.dist.shape == pytest.approx(4.0, abs=1e-3)


class TestGammaQuantile:
    def test_quantile_vanishes_as_probability_vanishes(self):
        g = GammaDist(7.29, 1.76)
        values = [gamma_quantile(g, p) for p in (1e-3, 1e-6, 1e-12, 1e-100)]
        assert all(b < a for a, b in zip(values, values[1:]))
        assert values[-1] > 0
        assert values[-1] < 1e-6

    def test_exponential_closed_form(self):
        for b in (0.5, 1.0, 3.0):
            for p in (0.1, 0.5, 0.9):
                assert gamma_quantile(GammaDist(1.0, b), p) == pytest.approx(-np.log(1 - p) / b, rel=1e-10)

    def test_fitted_median(self):
        assert gamma_quantile(GammaDist(7.29, 1.76), 0.5) == pytest.approx(3.95, abs=0.01)

    def test_round_trip_through_cdf(self):
        g = GammaDist(7.29, 1.76)
        for p in (0.01, 0.25, 0.5, 0.75, 0.99):
            assert g.cdf(gamma_quantile(g, p)) == pytest.approx(p, abs=1e-10)

    def test_rejects_bad_probability(self):
        g = GammaDist(1.0, 1.0)
        for p in (0.0, 1.0, -0.1, 1.1):
            with pytest.raises(ValueError):
                gamma_quantile(g, p)


class TestScenario:
    def test_invariant_enforced(self):
        with pytest.raises(ValueError):
            Scenario(separated=False, delay=2.0, hr_star=1.0)
        with pytest.raises(ValueError):
            Scenario(separated=False, delay=0.0, hr_star=0.5)

    def test_never_separates_when_p_zero(self):
        prior = EffectPrior(0.0, 0.7, GammaDist(7.29, 1.76), GammaDist(29.6, 47.8))
        rng = np.random.default_rng(1)
        for _ in range(200):
            s = sample_scenario(prior, rng)
            assert s == Scenario(False, 0.0, 1.0)

    def test_immediate_effect_case(self):
        prior = EffectPrior(1.0, 0.0, GammaDist(7.29, 1.76), GammaDist(29.6, 47.8))
        rng = np.random.default_rng(2)
        for _ in range(200):
            s = sample_scenario(prior, rng)
            assert s.separated and s.delay == 0.0 and s.hr_star > 0

    def test_marginals(self):
        prior = example_prior()
        rng = np.random.default_rng(3)
        n = 1_000_000
        separated = np.zeros(n, dtype=bool)
        delayed = np.zeros(n, dtype=bool)
        for i in range(n):
            s = sample_scenario(prior, rng)
            separated[i] = s.separated
            delayed[i] = s.delay > 0
        se_sep = np.sqrt(0.9 * 0.1 / n)
        assert abs(separated.mean() - 0.9) < 3 * se_sep
        p_cond = delayed[separated].mean()
        se_cond = np.sqrt(0.7 * 0.3 / separated.sum())
        assert abs(p_cond - 0.7) < 3 * se_cond
        # product rule: marginal P(delay > 0) = P_S * P_DTE
        se_prod = np.sqrt(0.63 * 0.37 / n)
        assert abs(delayed.mean() - 0.63) < 3 * se_prod

    def test_delay_and_hr_conditionally_independent(self):
        prior = example_prior()
        rng = np.random.default_rng(4)
        delays, hrs = [], []
        for _ in range(200_000):
            s = sample_scenario(prior, rng)
            if s.separated and s.delay > 0:
                delays.append(s.delay)
                hrs.append(s.hr_star)
        delays, hrs = np.array(delays), np.array(hrs)
        corr = np.corrcoef(delays, hrs)[0, 1]
        assert abs(corr) < 3 / np.sqrt(len(delays))

    def test_delay_and_hr_match_their_distributions(self):
        prior = example_prior()
        rng = np.random.default_rng(5)
        delays, hrs = [], []
        for _ in range(100_000):
            s = sample_scenario(prior, rng)
            if s.separated:
                hrs.append(s.hr_star)
                if s.delay > 0:
                    delays.append(s.delay)
        assert np.mean(delays) == pytest.approx(7.29 / 1.76, rel=0.02)
        assert np.mean(hrs) == pytest.approx(29.6 / 47.8, rel=0.02)

    def test_probability_validation(self):
        with pytest.raises(ValueError):
            EffectPrior(1.2, 0.5, GammaDist(1, 1), GammaDist(1, 1))
        with pytest.raises(ValueError):
            EffectPrior(0.5, -0.1, GammaDist(1, 1), GammaDist(1, 1))
