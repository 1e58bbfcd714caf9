"""The packaged example: preventing a critical health event.

A population faces a critical event that is expensive to treat and halves the
quality of the remaining 30 life years on average.  A novel preventive
treatment cuts the odds of the event but brings a side-effect risk and its
own cost.  Under current information the standard of care holds the whole
market; uptake of the novel treatment only starts once the evidence that it
is cost effective clears 60%, and grows linearly to full adoption at
certainty.

Three candidate studies could be run: a 60-patient side-effect study, a
100-response quality-of-life survey, and a 200-per-arm effectiveness trial.
"""

from __future__ import annotations

from .market import CurrentShares, ThresholdLinearShare
from .model import BetaPrior, FixedParams, NormalPrior, PriorSpec
from .studies import StudyDesign, StudyKind

__all__ = ["FIXED", "PRIORS", "STUDIES", "MARKET", "CURRENT_SHARES"]

FIXED = FixedParams(
    life_years=30.0,
    event_cost=200_000.0,
    treatment_cost=15_000.0,
    side_effect_cost=100_000.0,
    side_effect_qol_loss=1.0,
    wtp=75_000.0,
)

PRIORS = PriorSpec(
    p_event=BetaPrior(15.0, 85.0),
    log_odds_ratio=NormalPrior(-1.5, 1.0 / 3.0),
    p_side_effect=BetaPrior(3.0, 9.0),
    logit_qol=NormalPrior(0.6, 1.0 / 6.0),
)

STUDIES = (
    StudyDesign(StudyKind.SIDE_EFFECTS, 60),
    StudyDesign(StudyKind.QUALITY_OF_LIFE, 100),
    StudyDesign(StudyKind.EFFECTIVENESS_RCT, 200),
)

MARKET = ThresholdLinearShare(threshold=0.6, saturation_at=1.0, target=1)

CURRENT_SHARES = CurrentShares((1.0, 0.0))
