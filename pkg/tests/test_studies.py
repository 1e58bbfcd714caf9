"""Data simulation and posterior sampling for the three candidate studies."""

import math

import numpy as np
import pytest
from scipy import stats
from scipy.special import logit

import voi.studies as studies
from voi.model import ParameterDraw
from voi.studies import (
    Dataset,
    SamplerError,
    StudyDesign,
    StudyKind,
    posterior_draws_for,
    posterior_effectiveness,
    posterior_quality,
    posterior_side_effects,
    quality_posterior_moments,
    rct_grid_posterior,
    simulate_dataset,
)

DRAW = ParameterDraw.from_primitives(
    p_event=0.15, odds_ratio=0.2636, p_side_effect=0.25, qol_after_event=0.6405)


def _batch_se(x: np.ndarray, n_batches: int = 25) -> float:
    """Monte Carlo standard error of a (possibly autocorrelated) chain mean."""
    n = (len(x) // n_batches) * n_batches
    means = x[:n].reshape(n_batches, -1).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def _ks_matches_prior(values: np.ndarray, cdf) -> bool:
    return stats.kstest(values, cdf).pvalue > 0.001


class TestSimulateDataset:
    def test_deterministic(self):
        design = StudyDesign(StudyKind.SIDE_EFFECTS, 60)
        a = simulate_dataset(design, DRAW, 5)
        b = simulate_dataset(design, DRAW, 5)
        assert a == b

    def test_side_effects_degenerate(self):
        draw = ParameterDraw(0.15, 0.3, 0.0, 0.64, 0.05)
        ds = simulate_dataset(StudyDesign(StudyKind.SIDE_EFFECTS, 60), draw, 1)
        assert ds.events == 0

    def test_side_effects_binomial_moments(self):
        design = StudyDesign(StudyKind.SIDE_EFFECTS, 60)
        xs = np.array([simulate_dataset(design, DRAW, s).events
                       for s in range(5000)], dtype=float)
        assert abs(xs.mean() - 15.0) <= 3.0 * math.sqrt(11.25 / 5000)
        assert xs.var(ddof=1) == pytest.approx(11.25, rel=0.1)

    def test_quality_sum_moments(self):
        design = StudyDesign(StudyKind.QUALITY_OF_LIFE, 100)
        totals = np.array([simulate_dataset(design, DRAW, s).logit_total
                           for s in range(3000)])
        center = 100.0 * logit(0.6405)
        var = 100.0 * 2.0
        assert abs(totals.mean() - center) <= 3.0 * math.sqrt(var / 3000)
        assert totals.var(ddof=1) == pytest.approx(var, rel=0.15)

    def test_trial_null_effect_balances_arms(self):
        draw = ParameterDraw.from_primitives(
            p_event=0.15, odds_ratio=1.0, p_side_effect=0.25, qol_after_event=0.64)
        design = StudyDesign(StudyKind.EFFECTIVENESS_RCT, 200)
        xc, xt = zip(*[(d.control_events, d.treated_events)
                       for d in (simulate_dataset(design, draw, s) for s in range(3000))])
        diff = np.array(xc, dtype=float) - np.array(xt, dtype=float)
        assert abs(diff.mean()) <= 3.0 * math.sqrt(2 * 200 * 0.15 * 0.85 / 3000)

    def test_zero_size_designs_carry_no_data(self):
        for kind in StudyKind:
            ds = simulate_dataset(StudyDesign(kind, 0), DRAW, 2)
            assert ds.n_effective == 0

    def test_design_validation(self):
        with pytest.raises(ValueError):
            StudyDesign(StudyKind.SIDE_EFFECTS, -1)
        with pytest.raises(ValueError):
            StudyDesign(StudyKind.SIDE_EFFECTS, 1.5)


class TestSideEffectPosterior:
    design = StudyDesign(StudyKind.SIDE_EFFECTS, 60)

    def test_conjugate_update(self, priors):
        ds = Dataset(design=self.design, n_effective=60, events=15)
        post = posterior_side_effects(ds, priors, 10_000, 3)
        p = np.asarray(post.draws.p_side_effect)
        # Beta(3 + 15, 9 + 45): mean 0.25.
        ref = stats.beta(18, 54)
        assert abs(p.mean() - 0.25) <= 3.0 * ref.std() / math.sqrt(10_000)
        assert _ks_matches_prior(p, ref.cdf)

    def test_no_events_observed(self, priors):
        ds = Dataset(design=self.design, n_effective=60, events=0)
        post = posterior_side_effects(ds, priors, 10_000, 3)
        p = np.asarray(post.draws.p_side_effect)
        ref = stats.beta(3, 69)
        assert abs(p.mean() - 3.0 / 72.0) <= 3.0 * ref.std() / math.sqrt(10_000)

    def test_other_parameters_keep_their_priors(self, priors):
        ds = Dataset(design=self.design, n_effective=60, events=15)
        post = posterior_side_effects(ds, priors, 10_000, 3)
        assert _ks_matches_prior(np.asarray(post.draws.p_event),
                                 stats.beta(15, 85).cdf)
        assert _ks_matches_prior(np.log(np.asarray(post.draws.odds_ratio)),
                                 stats.norm(-1.5, math.sqrt(1 / 3)).cdf)
        assert _ks_matches_prior(logit(np.asarray(post.draws.qol_after_event)),
                                 stats.norm(0.6, math.sqrt(1 / 6)).cdf)

    def test_kind_mismatch(self, priors):
        ds = Dataset(design=StudyDesign(StudyKind.QUALITY_OF_LIFE, 100),
                     n_effective=100, logit_total=40.0)
        with pytest.raises(ValueError):
            posterior_side_effects(ds, priors, 100, 0)


class TestQualityPosterior:
    design = StudyDesign(StudyKind.QUALITY_OF_LIFE, 100)

    def test_moments_at_centered_data(self, priors):
        # Sample mean of logits equal to the prior mean: posterior stays at
        # 0.6 and the precision becomes 6 + 100/2 = 56.
        ds = Dataset(design=self.design, n_effective=100, logit_total=60.0)
        mean, var = quality_posterior_moments(ds, priors)
        assert mean == pytest.approx(0.6)
        assert var == pytest.approx(1.0 / 56.0)

    def test_draws_match_moments(self, priors):
        ds = Dataset(design=self.design, n_effective=100, logit_total=60.0)
        post = posterior_quality(ds, priors, 10_000, 4)
        z = logit(np.asarray(post.draws.qol_after_event))
        assert abs(z.mean() - 0.6) <= 3.0 * math.sqrt(1.0 / 56.0 / 10_000)
        assert z.var(ddof=1) == pytest.approx(1.0 / 56.0, rel=0.08)

    def test_empty_survey_returns_prior(self, priors):
        ds = Dataset(design=StudyDesign(StudyKind.QUALITY_OF_LIFE, 0),
                     n_effective=0, logit_total=0.0)
        mean, var = quality_posterior_moments(ds, priors)
        assert (mean, var) == (0.6, pytest.approx(1.0 / 6.0))
        post = posterior_quality(ds, priors, 10_000, 4)
        assert _ks_matches_prior(logit(np.asarray(post.draws.qol_after_event)),
                                 stats.norm(0.6, math.sqrt(1 / 6)).cdf)

    def test_posterior_tighter_than_prior(self, priors):
        for n in (1, 10, 100, 1000):
            ds = Dataset(design=StudyDesign(StudyKind.QUALITY_OF_LIFE, n),
                         n_effective=n, logit_total=0.6 * n)
            _, var = quality_posterior_moments(ds, priors)
            assert var < 1.0 / 6.0

    def test_other_parameters_keep_their_priors(self, priors):
        ds = Dataset(design=self.design, n_effective=100, logit_total=55.0)
        post = posterior_quality(ds, priors, 10_000, 4)
        assert _ks_matches_prior(np.asarray(post.draws.p_event),
                                 stats.beta(15, 85).cdf)
        assert _ks_matches_prior(np.asarray(post.draws.p_side_effect),
                                 stats.beta(3, 9).cdf)

    def test_kind_mismatch(self, priors):
        ds = Dataset(design=StudyDesign(StudyKind.SIDE_EFFECTS, 60),
                     n_effective=60, events=15)
        with pytest.raises(ValueError):
            posterior_quality(ds, priors, 100, 0)


class TestEffectivenessPosterior:
    design = StudyDesign(StudyKind.EFFECTIVENESS_RCT, 200)

    def _dataset(self, xc: int, xt: int) -> Dataset:
        return Dataset(design=self.design, n_effective=200,
                       control_events=xc, treated_events=xt)

    def test_matches_grid_oracle_at_prior_mean_data(self, priors):
        ds = self._dataset(30, 9)
        post = posterior_effectiveness(ds, priors, 5000, 11)
        grid = rct_grid_posterior(ds, priors)
        g = np.log(np.asarray(post.draws.odds_ratio))
        g_mean, g_var = grid["log_odds_ratio"]
        assert abs(g.mean() - g_mean) <= 4.0 * _batch_se(g)
        assert g.var(ddof=1) == pytest.approx(g_var, rel=0.15)
        assert g.var(ddof=1) < 1.0 / 3.0
        assert g_var < 1.0 / 3.0

    def test_acceptance_rate_reported(self, priors):
        post = posterior_effectiveness(self._dataset(30, 9), priors, 1000, 11)
        assert 0.05 < post.acceptance_rate < 0.95

    def test_empty_trial_reproduces_prior(self, priors):
        ds = Dataset(design=StudyDesign(StudyKind.EFFECTIVENESS_RCT, 0),
                     n_effective=0, control_events=0, treated_events=0)
        post = posterior_effectiveness(ds, priors, 10_000, 12)
        g = np.log(np.asarray(post.draws.odds_ratio))
        assert abs(g.mean() + 1.5) <= 4.0 * _batch_se(g)
        assert g.var(ddof=1) == pytest.approx(1.0 / 3.0, rel=0.15)

    def test_untouched_parameters_keep_their_priors(self, priors):
        post = posterior_effectiveness(self._dataset(30, 9), priors, 10_000, 13)
        assert _ks_matches_prior(np.asarray(post.draws.p_side_effect),
                                 stats.beta(3, 9).cdf)
        assert _ks_matches_prior(logit(np.asarray(post.draws.qol_after_event)),
                                 stats.norm(0.6, math.sqrt(1 / 6)).cdf)

    def test_sampler_failure_raises(self, priors, monkeypatch):
        monkeypatch.setattr(studies, "_ACCEPTANCE_BOUNDS", (0.999, 1.0))
        with pytest.raises(SamplerError):
            posterior_effectiveness(self._dataset(30, 9), priors, 500, 11)

    def test_kind_mismatch(self, priors):
        ds = Dataset(design=StudyDesign(StudyKind.SIDE_EFFECTS, 60),
                     n_effective=60, events=15)
        with pytest.raises(ValueError):
            posterior_effectiveness(ds, priors, 100, 0)


class TestDispatch:
    def test_posterior_draws_for_routes_by_kind(self, priors):
        cases = [
            Dataset(design=StudyDesign(StudyKind.SIDE_EFFECTS, 60),
                    n_effective=60, events=15),
            Dataset(design=StudyDesign(StudyKind.QUALITY_OF_LIFE, 100),
                    n_effective=100, logit_total=60.0),
            Dataset(design=StudyDesign(StudyKind.EFFECTIVENESS_RCT, 200),
                    n_effective=200, control_events=30, treated_events=9),
        ]
        for ds in cases:
            post = posterior_draws_for(ds, priors, 200, 9)
            assert np.asarray(post.draws.p_event).shape == (200,)

    def test_informed_sets(self):
        assert StudyDesign(StudyKind.SIDE_EFFECTS, 60).informed == {"p_side_effect"}
        assert StudyDesign(StudyKind.QUALITY_OF_LIFE, 100).informed == {"qol_after_event"}
        assert StudyDesign(StudyKind.EFFECTIVENESS_RCT, 200).informed == {"odds_ratio"}
