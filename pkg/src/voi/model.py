"""Two-treatment decision model and probabilistic sensitivity analysis.

The model concerns patients at risk of a critical health event.  Under the
standard of care a patient experiences the event with probability ``p_event``;
a novel treatment lowers the odds of the event by a factor ``odds_ratio`` but
can cause a side effect with probability ``p_side_effect``.  A patient who has
the event lives the rest of their life at a reduced quality of life
``qol_after_event`` relative to full health; the decline is modelled as linear,
so the event costs ``(1 - qol_after_event) / 2`` QALYs per remaining life year
on average.  The side effect removes a fixed number of QALYs.

Net benefit is measured in money at a fixed willingness to pay per QALY.  Both
net-benefit functions are pure and broadcast over numpy arrays, so a single
call evaluates a whole probabilistic sensitivity analysis (PSA) sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .rng import substream

__all__ = [
    "FixedParams",
    "BetaPrior",
    "NormalPrior",
    "PriorSpec",
    "ParameterDraw",
    "PsaSample",
    "derive_pt",
    "net_benefit_standard",
    "net_benefit_novel",
    "DEFAULT_NB_FUNCTIONS",
    "sample_prior",
    "expected_nb",
    "prob_cost_effective",
    "evpi",
]


@dataclass(frozen=True)
class FixedParams:
    """Known quantities of the decision model.

    life_years: remaining life expectancy of a treated patient, in years.
    event_cost: cost of treating the critical event.
    treatment_cost: cost of the novel treatment itself.
    side_effect_cost: cost of managing the side effect.
    side_effect_qol_loss: QALYs lost to the side effect.
    wtp: willingness to pay per QALY.
    """

    life_years: float
    event_cost: float
    treatment_cost: float
    side_effect_cost: float
    side_effect_qol_loss: float
    wtp: float

    def __post_init__(self) -> None:
        if self.life_years < 1.0:
            raise ValueError("life_years must be at least 1")
        for name in ("event_cost", "treatment_cost", "side_effect_cost", "wtp"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.side_effect_qol_loss < 0.0:
            raise ValueError("side_effect_qol_loss must be nonnegative")


@dataclass(frozen=True)
class BetaPrior:
    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if self.alpha <= 0.0 or self.beta <= 0.0:
            raise ValueError("Beta prior requires positive shape parameters")

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    @property
    def variance(self) -> float:
        s = self.alpha + self.beta
        return self.alpha * self.beta / (s * s * (s + 1.0))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.beta(self.alpha, self.beta, size)


@dataclass(frozen=True)
class NormalPrior:
    """Normal prior given as (mean, variance)."""

    mean: float
    variance: float

    def __post_init__(self) -> None:
        if self.variance <= 0.0:
            raise ValueError("Normal prior requires positive variance")

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.normal(self.mean, self.sd, size)


@dataclass(frozen=True)
class PriorSpec:
    """Priors over the four uncertain model parameters.

    ``log_odds_ratio`` and ``logit_qol`` are priors on transformed scales; the
    sampler maps them back through exp and the logistic function.
    """

    p_event: BetaPrior
    log_odds_ratio: NormalPrior
    p_side_effect: BetaPrior
    logit_qol: NormalPrior

    # Canonical sampling order, shared by every routine that fills in
    # parameters from the prior.  Keeping one order makes streams reproducible.
    FIELD_ORDER = ("p_event", "odds_ratio", "p_side_effect", "qol_after_event")


def derive_pt(p_event, odds_ratio):
    """Probability of the event under the novel treatment.

    Applies the odds-ratio reduction to the baseline probability:
    ``p * or / (1 - p + p * or)``.  Broadcasts over arrays.
    """
    p = np.asarray(p_event, dtype=float)
    o = np.asarray(odds_ratio, dtype=float)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("p_event must lie strictly inside (0, 1)")
    if np.any(o <= 0.0):
        raise ValueError("odds_ratio must be positive")
    out = p * o / (1.0 - p + p * o)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class ParameterDraw:
    """One parameter set (or a whole vector of them; fields broadcast).

    ``p_event_treated`` is derived, never sampled: it must equal
    ``derive_pt(p_event, odds_ratio)``.  Use :meth:`from_primitives` to build
    validated draws from the four sampled quantities.
    """

    p_event: float | np.ndarray
    odds_ratio: float | np.ndarray
    p_side_effect: float | np.ndarray
    qol_after_event: float | np.ndarray
    p_event_treated: float | np.ndarray

    @classmethod
    def from_primitives(cls, p_event, odds_ratio, p_side_effect, qol_after_event) -> "ParameterDraw":
        for name, value in (("p_event", p_event), ("p_side_effect", p_side_effect),
                            ("qol_after_event", qol_after_event)):
            v = np.asarray(value, dtype=float)
            if np.any(v <= 0.0) or np.any(v >= 1.0):
                raise ValueError(f"{name} must lie strictly inside (0, 1)")
        return cls(
            p_event=p_event,
            odds_ratio=odds_ratio,
            p_side_effect=p_side_effect,
            qol_after_event=qol_after_event,
            p_event_treated=derive_pt(p_event, odds_ratio),
        )

    def item(self, i: int) -> "ParameterDraw":
        """Scalar draw at index ``i`` of vector-valued fields."""
        return ParameterDraw(
            p_event=float(np.asarray(self.p_event)[i]),
            odds_ratio=float(np.asarray(self.odds_ratio)[i]),
            p_side_effect=float(np.asarray(self.p_side_effect)[i]),
            qol_after_event=float(np.asarray(self.qol_after_event)[i]),
            p_event_treated=float(np.asarray(self.p_event_treated)[i]),
        )


def net_benefit_standard(draw: ParameterDraw, fixed: FixedParams):
    """Monetary net benefit of the standard of care.

    QALYs: an event patient gets ``life_years * (1 + qol) / 2`` (linear decline
    to ``qol``), everyone else gets full ``life_years``.  Costs: treating the
    event.  Broadcasts over array-valued draws.
    """
    event_qalys = fixed.life_years * (1.0 + draw.qol_after_event) / 2.0
    qalys = draw.p_event * event_qalys + (1.0 - draw.p_event) * fixed.life_years
    return fixed.wtp * qalys - draw.p_event * fixed.event_cost


def net_benefit_novel(draw: ParameterDraw, fixed: FixedParams):
    """Monetary net benefit of the novel treatment.

    Averages QALYs over the four event-by-side-effect outcomes at the treated
    event probability, and charges the treatment cost plus expected event and
    side-effect management costs.
    """
    pt = draw.p_event_treated
    ps = draw.p_side_effect
    event_qalys = fixed.life_years * (1.0 + draw.qol_after_event) / 2.0
    qalys = (
        pt * ps * (event_qalys - fixed.side_effect_qol_loss)
        + pt * (1.0 - ps) * event_qalys
        + (1.0 - pt) * ps * (fixed.life_years - fixed.side_effect_qol_loss)
        + (1.0 - pt) * (1.0 - ps) * fixed.life_years
    )
    costs = fixed.treatment_cost + pt * fixed.event_cost + ps * fixed.side_effect_cost
    return fixed.wtp * qalys - costs


DEFAULT_NB_FUNCTIONS = (net_benefit_standard, net_benefit_novel)


@dataclass(frozen=True)
class PsaSample:
    """A probabilistic sensitivity analysis sample.

    ``draws`` holds length-S arrays in each field; ``nb`` is the S x D matrix
    whose row i evaluates every treatment's net benefit at draw i.  Treatment
    columns are ordered (standard, novel) for the default model.
    """

    draws: ParameterDraw
    nb: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        nb = np.asarray(self.nb)
        if nb.ndim != 2 or nb.shape[0] < 2 or nb.shape[1] < 2:
            raise ValueError("nb must be an S x D matrix with S >= 2 and D >= 2")
        if not np.all(np.isfinite(nb)):
            raise ValueError("nb contains non-finite values")

    def __len__(self) -> int:
        return self.nb.shape[0]

    @property
    def n_treatments(self) -> int:
        return self.nb.shape[1]


def sample_prior(
    spec: PriorSpec,
    fixed: FixedParams,
    n_samples: int,
    seed: int,
    nb_functions=DEFAULT_NB_FUNCTIONS,
) -> PsaSample:
    """Draw a PSA sample of size ``n_samples`` from the prior.

    All draws come from the single substream ``(seed, "prior")`` in the
    canonical field order, so the result is a bit-reproducible function of
    ``(spec, fixed, n_samples, seed)``.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    rng = substream(seed, "prior")
    p_event = spec.p_event.sample(rng, n_samples)
    odds_ratio = np.exp(spec.log_odds_ratio.sample(rng, n_samples))
    p_side = spec.p_side_effect.sample(rng, n_samples)
    qol = expit(spec.logit_qol.sample(rng, n_samples))
    draws = ParameterDraw.from_primitives(p_event, odds_ratio, p_side, qol)
    nb = np.column_stack([fn(draws, fixed) for fn in nb_functions])
    return PsaSample(draws=draws, nb=nb, seed=seed)


def expected_nb(psa: PsaSample) -> np.ndarray:
    """Mean net benefit per treatment (length D)."""
    return psa.nb.mean(axis=0)


def prob_cost_effective(psa: PsaSample) -> np.ndarray:
    """Probability that each treatment attains the row maximum of ``nb``.

    Ties go to the lowest treatment index.  The first component is defined as
    one minus the rest so the vector sums to exactly 1.0.
    """
    winner = np.argmax(psa.nb, axis=1)
    counts = np.bincount(winner, minlength=psa.n_treatments)
    p = counts / len(psa)
    p[0] = max(0.0, 1.0 - p[1:].sum())
    return p


def evpi(psa: PsaSample) -> float:
    """Expected value of perfect information for the PSA sample."""
    value = float(np.mean(np.max(psa.nb, axis=1)) - np.max(psa.nb.mean(axis=0)))
    return max(0.0, value)
