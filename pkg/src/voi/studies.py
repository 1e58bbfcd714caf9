"""Study designs, data simulation, and posterior sampling.

Three data collection exercises can inform the decision model:

* ``side_effects``: a single-arm safety study; binomial count of side effects.
* ``quality_of_life``: a survey whose individual responses are normal on the
  logit scale around the true post-event quality of life, with known variance
  ``LOGIT_RESPONSE_VARIANCE``.
* ``effectiveness_rct``: a two-arm trial; binomial event counts under the
  standard of care and under the novel treatment.

Each design informs only a subset of the model parameters.  Posterior sampling
returns draws of the full parameter vector: informed parameters come from
their posterior, the rest are redrawn fresh from the prior (they are a priori
independent of the informed block, and the data carry nothing about them).

The first two posteriors are conjugate.  The trial posterior over
``(logit p_event, log odds_ratio)`` has no closed form and is sampled with an
adaptive random-walk Metropolis algorithm; a deterministic grid-quadrature
routine over the same posterior is shipped as an independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit, logit

from .model import ParameterDraw, PriorSpec, derive_pt
from .rng import substream

__all__ = [
    "StudyKind",
    "StudyDesign",
    "Dataset",
    "PosteriorDraws",
    "SamplerError",
    "LOGIT_RESPONSE_VARIANCE",
    "simulate_dataset",
    "posterior_side_effects",
    "posterior_quality",
    "posterior_effectiveness",
    "run_rct_chains",
    "rct_grid_posterior",
]

# Known variance of one survey response on the logit scale.
LOGIT_RESPONSE_VARIANCE = 2.0


class StudyKind(str, Enum):
    SIDE_EFFECTS = "side_effects"
    QUALITY_OF_LIFE = "quality_of_life"
    EFFECTIVENESS_RCT = "effectiveness_rct"


# Each study is run to resolve uncertainty in exactly one target parameter.
# The trial's two binomial arms also carry information about the baseline
# event rate, but only the treatment-effect update (the odds ratio marginal,
# baseline integrated out) feeds the decision model; the baseline rate is
# redrawn from the prior like every other non-target parameter.
_INFORMED = {
    StudyKind.SIDE_EFFECTS: frozenset({"p_side_effect"}),
    StudyKind.QUALITY_OF_LIFE: frozenset({"qol_after_event"}),
    StudyKind.EFFECTIVENESS_RCT: frozenset({"odds_ratio"}),
}


@dataclass(frozen=True)
class StudyDesign:
    """A study kind plus its sample size (per arm for the trial).

    ``n = 0`` is allowed as the degenerate no-information design: the data are
    then independent of the parameters and every posterior equals the prior.
    """

    kind: StudyKind
    n: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", StudyKind(self.kind))
        if not isinstance(self.n, (int, np.integer)) or self.n < 0:
            raise ValueError("n must be a nonnegative integer")
        object.__setattr__(self, "n", int(self.n))

    @property
    def informed(self) -> frozenset:
        """Names of the ParameterDraw fields the study is informative about."""
        return _INFORMED[self.kind]

    def with_n(self, n: int) -> "StudyDesign":
        return replace(self, n=n)


@dataclass(frozen=True)
class Dataset:
    """A simulated dataset, reduced to its sufficient statistics."""

    design: StudyDesign
    n_effective: int
    events: int | None = None          # side-effects count
    logit_total: float | None = None   # quality survey: sum of logit responses
    control_events: int | None = None  # trial: events under standard of care
    treated_events: int | None = None  # trial: events under novel treatment


@dataclass(frozen=True)
class PosteriorDraws:
    """R draws of the full parameter vector given one dataset."""

    draws: ParameterDraw
    dataset: Dataset
    seed: int
    acceptance_rate: float | None = None


class SamplerError(RuntimeError):
    """Raised when posterior sampling fails its own diagnostics."""


def simulate_dataset(design: StudyDesign, draw: ParameterDraw, seed: int) -> Dataset:
    """Simulate one dataset from the design at the given parameter values."""
    rng = substream(seed, "data", design.kind.value)
    n = design.n
    if design.kind is StudyKind.SIDE_EFFECTS:
        x = int(rng.binomial(n, draw.p_side_effect)) if n > 0 else 0
        return Dataset(design=design, n_effective=n, events=x)
    if design.kind is StudyKind.QUALITY_OF_LIFE:
        center = logit(draw.qol_after_event)
        total = float(rng.normal(center, math.sqrt(LOGIT_RESPONSE_VARIANCE), n).sum())
        return Dataset(design=design, n_effective=n, logit_total=total)
    xc = int(rng.binomial(n, draw.p_event)) if n > 0 else 0
    xt = int(rng.binomial(n, draw.p_event_treated)) if n > 0 else 0
    return Dataset(design=design, n_effective=n, control_events=xc, treated_events=xt)


def _require_kind(dataset: Dataset, kind: StudyKind) -> None:
    if dataset.design.kind is not kind:
        raise ValueError(f"dataset comes from {dataset.design.kind.value!r}, expected {kind.value!r}")


def _fill_from_prior(prior: PriorSpec, rng: np.random.Generator, size: int,
                     informed: dict) -> ParameterDraw:
    """Complete a draw: posterior values for informed fields, prior for the rest.

    Fields are visited in the canonical order so stream consumption is fixed.
    """
    values = {}
    for name in PriorSpec.FIELD_ORDER:
        if name in informed:
            values[name] = informed[name]
        elif name == "p_event":
            values[name] = prior.p_event.sample(rng, size)
        elif name == "odds_ratio":
            values[name] = np.exp(prior.log_odds_ratio.sample(rng, size))
        elif name == "p_side_effect":
            values[name] = prior.p_side_effect.sample(rng, size)
        else:
            values[name] = expit(prior.logit_qol.sample(rng, size))
    return ParameterDraw.from_primitives(**values)


def posterior_side_effects(dataset: Dataset, prior: PriorSpec, n_draws: int, seed: int) -> PosteriorDraws:
    """Conjugate posterior for the safety study.

    ``p_side_effect | x ~ Beta(alpha + x, beta + n - x)``; everything else is
    redrawn from the prior.
    """
    _require_kind(dataset, StudyKind.SIDE_EFFECTS)
    rng = substream(seed, "posterior", dataset.design.kind.value)
    a = prior.p_side_effect.alpha + dataset.events
    b = prior.p_side_effect.beta + (dataset.n_effective - dataset.events)
    p_side = rng.beta(a, b, n_draws)
    draws = _fill_from_prior(prior, rng, n_draws, {"p_side_effect": p_side})
    return PosteriorDraws(draws=draws, dataset=dataset, seed=seed)


def quality_posterior_moments(dataset: Dataset, prior: PriorSpec) -> tuple[float, float]:
    """Posterior (mean, variance) of logit(qol) for the quality survey.

    Normal-normal update with known response variance: posterior precision is
    the prior precision plus n / LOGIT_RESPONSE_VARIANCE.
    """
    _require_kind(dataset, StudyKind.QUALITY_OF_LIFE)
    prior_prec = 1.0 / prior.logit_qol.variance
    data_prec = dataset.n_effective / LOGIT_RESPONSE_VARIANCE
    post_prec = prior_prec + data_prec
    post_mean = (prior.logit_qol.mean * prior_prec + dataset.logit_total / LOGIT_RESPONSE_VARIANCE) / post_prec
    return post_mean, 1.0 / post_prec


def posterior_quality(dataset: Dataset, prior: PriorSpec, n_draws: int, seed: int) -> PosteriorDraws:
    """Conjugate posterior for the quality-of-life survey."""
    rng = substream(seed, "posterior", dataset.design.kind.value)
    post_mean, post_var = quality_posterior_moments(dataset, prior)
    qol = expit(rng.normal(post_mean, math.sqrt(post_var), n_draws))
    draws = _fill_from_prior(prior, rng, n_draws, {"qol_after_event": qol})
    return PosteriorDraws(draws=draws, dataset=dataset, seed=seed)


# ---------------------------------------------------------------------------
# Trial posterior: adaptive random-walk Metropolis on (logit p_event, log OR).
# ---------------------------------------------------------------------------

# Relative proposal shape: the posterior is a few times tighter in the logit
# event probability than in the log odds ratio.
_PROPOSAL_SHAPE = np.array([0.15, 0.30])
_ACCEPTANCE_TARGET = 0.30
_ACCEPTANCE_BOUNDS = (0.05, 0.95)


def _rct_log_post(l: np.ndarray, g: np.ndarray, x1, n1, x2, n2, prior: PriorSpec) -> np.ndarray:
    """Unnormalised log posterior density at (l, g) = (logit p_event, log OR).

    The Beta(alpha, beta) prior on p_event becomes, with the Jacobian of the
    logit transform, alpha*l - (alpha+beta)*log(1+e^l) up to a constant, and
    the treated arm has event probability expit(l + g).
    """
    a = prior.p_event.alpha
    b = prior.p_event.beta
    lp = (a + x1) * l - (a + b + n1) * np.logaddexp(0.0, l)
    lp = lp + x2 * (l + g) - n2 * np.logaddexp(0.0, l + g)
    m, v = prior.log_odds_ratio.mean, prior.log_odds_ratio.variance
    lp = lp - 0.5 * (g - m) ** 2 / v
    return lp


def run_rct_chains(
    datasets: Sequence[Dataset],
    prior: PriorSpec,
    n_draws: int,
    seed: int,
    *,
    thin: int = 5,
    n_adapt: int = 1000,
    n_burn_in: int = 1000,
    on_retained: Callable[[int, np.ndarray, np.ndarray], None] | None = None,
    keep_chain: bool = True,
):
    """Run one Metropolis chain per trial dataset, all advanced in lockstep.

    Per-chain proposal scales are adapted for ``n_adapt`` iterations toward a
    0.2-0.4 acceptance rate, then frozen through ``n_burn_in`` burn-in
    iterations and ``n_draws * thin`` sampling iterations, of which every
    ``thin``-th state is retained.  Acceptance is monitored over the sampling
    phase and must land inside ``_ACCEPTANCE_BOUNDS`` for every chain.

    Returns ``(l, g, acceptance)`` where ``l`` and ``g`` are
    ``(n_draws, len(datasets))`` arrays of retained states, or ``(None, None,
    acceptance)`` when ``keep_chain`` is false and the caller consumes states
    through ``on_retained``.
    """
    for ds in datasets:
        _require_kind(ds, StudyKind.EFFECTIVENESS_RCT)
    m = len(datasets)
    if m == 0:
        raise ValueError("need at least one dataset")
    rng = substream(seed, "posterior", "effectiveness_rct")
    x1 = np.array([ds.control_events for ds in datasets], dtype=float)
    x2 = np.array([ds.treated_events for ds in datasets], dtype=float)
    n1 = np.array([ds.n_effective for ds in datasets], dtype=float)
    n2 = n1.copy()

    # Start at a data-informed point for the event probability and at the
    # prior mean for the log odds ratio.
    a, b = prior.p_event.alpha, prior.p_event.beta
    l = logit((x1 + a) / (n1 + a + b))
    g = np.full(m, prior.log_odds_ratio.mean)
    lp = _rct_log_post(l, g, x1, n1, x2, n2, prior)

    # Per-chain multiplier on the base proposal shape; 2.4/sqrt(2) is the
    # classic random-walk scaling for two dimensions.
    log_scale = np.full(m, math.log(2.4 / math.sqrt(2.0)))

    def step(adapting: bool, t: int) -> np.ndarray:
        nonlocal l, g, lp, log_scale
        scale = np.exp(log_scale)
        noise = rng.standard_normal((m, 2))
        l_prop = l + scale * _PROPOSAL_SHAPE[0] * noise[:, 0]
        g_prop = g + scale * _PROPOSAL_SHAPE[1] * noise[:, 1]
        lp_prop = _rct_log_post(l_prop, g_prop, x1, n1, x2, n2, prior)
        accept = np.log(rng.random(m)) < lp_prop - lp
        l = np.where(accept, l_prop, l)
        g = np.where(accept, g_prop, g)
        lp = np.where(accept, lp_prop, lp)
        if adapting:
            gain = t ** -0.6
            log_scale = log_scale + gain * (accept.astype(float) - _ACCEPTANCE_TARGET)
        return accept

    for t in range(1, n_adapt + 1):
        step(True, t)
    for _ in range(n_burn_in):
        step(False, 0)

    accepted = np.zeros(m)
    if keep_chain:
        l_out = np.empty((n_draws, m))
        g_out = np.empty((n_draws, m))
    total = n_draws * thin
    r = 0
    for it in range(1, total + 1):
        accepted += step(False, 0)
        if it % thin == 0:
            if keep_chain:
                l_out[r] = l
                g_out[r] = g
            if on_retained is not None:
                on_retained(r, l, g)
            r += 1
    acceptance = accepted / total
    low, high = _ACCEPTANCE_BOUNDS
    bad = (acceptance <= low) | (acceptance >= high)
    if np.any(bad):
        rates = ", ".join(f"{x:.3f}" for x in acceptance[bad][:5])
        raise SamplerError(
            f"Metropolis acceptance rate outside ({low}, {high}) for "
            f"{int(bad.sum())} of {m} chains (e.g. {rates})"
        )
    if keep_chain:
        return l_out, g_out, acceptance
    return None, None, acceptance


def posterior_effectiveness(dataset: Dataset, prior: PriorSpec, n_draws: int, seed: int,
                            *, thin: int = 5, n_adapt: int = 1000, n_burn_in: int = 1000) -> PosteriorDraws:
    """Posterior draws of the odds ratio for the trial design.

    The Metropolis chain runs on the joint (logit baseline rate, log odds
    ratio) posterior; keeping only the second coordinate yields draws from the
    odds-ratio marginal with the baseline rate integrated out. All other
    parameters, the baseline rate included, are redrawn from the prior.
    """
    _, g, acceptance = run_rct_chains([dataset], prior, n_draws, seed,
                                      thin=thin, n_adapt=n_adapt, n_burn_in=n_burn_in)
    rng = substream(seed, "posterior", "effectiveness_rct", "complement")
    odds_ratio = np.exp(g[:, 0])
    draws = _fill_from_prior(prior, rng, n_draws, {"odds_ratio": odds_ratio})
    return PosteriorDraws(draws=draws, dataset=dataset, seed=seed,
                          acceptance_rate=float(acceptance[0]))


def posterior_draws_for(dataset: Dataset, prior: PriorSpec, n_draws: int,
                        seed: int) -> PosteriorDraws:
    """Posterior parameter draws for a dataset, dispatched on its study kind."""
    kind = dataset.design.kind
    if kind is StudyKind.SIDE_EFFECTS:
        return posterior_side_effects(dataset, prior, n_draws, seed)
    if kind is StudyKind.QUALITY_OF_LIFE:
        return posterior_quality(dataset, prior, n_draws, seed)
    return posterior_effectiveness(dataset, prior, n_draws, seed)


def rct_grid_posterior(dataset: Dataset, prior: PriorSpec, n_nodes: int = 200) -> dict:
    """Deterministic quadrature over the trial posterior.

    Lays an ``n_nodes x n_nodes`` grid over the central 99.9% prior ranges of
    (logit p_event, log odds_ratio) and normalises the posterior density on
    it.  Returns posterior means and variances of the event probabilities and
    the log odds ratio.  Serves as an independent oracle for the Metropolis
    sampler.
    """
    from scipy.stats import beta as beta_dist, norm

    _require_kind(dataset, StudyKind.EFFECTIVENESS_RCT)
    q = (0.0005, 0.9995)
    p_lo, p_hi = beta_dist.ppf(q, prior.p_event.alpha, prior.p_event.beta)
    l_grid = np.linspace(logit(p_lo), logit(p_hi), n_nodes)
    g_lo, g_hi = norm.ppf(q, prior.log_odds_ratio.mean, prior.log_odds_ratio.sd)
    g_grid = np.linspace(g_lo, g_hi, n_nodes)
    L, G = np.meshgrid(l_grid, g_grid, indexing="ij")
    x1 = float(dataset.control_events)
    x2 = float(dataset.treated_events)
    n = float(dataset.n_effective)
    log_post = _rct_log_post(L, G, x1, n, x2, n, prior)
    log_post -= log_post.max()
    w = np.exp(log_post)
    w /= w.sum()

    p_event = expit(L)
    p_treated = expit(L + G)

    def moments(values: np.ndarray) -> tuple[float, float]:
        mean = float((w * values).sum())
        var = float((w * (values - mean) ** 2).sum())
        return mean, var

    pe_mean, pe_var = moments(p_event)
    pt_mean, pt_var = moments(p_treated)
    g_mean, g_var = moments(G)
    return {
        "p_event": (pe_mean, pe_var),
        "p_event_treated": (pt_mean, pt_var),
        "log_odds_ratio": (g_mean, g_var),
    }
