"""Market-share dynamics and the implementation-adjusted value assembly.

A decision is rarely rolled out wholesale: after a study reports, each
treatment captures only a share of the market.  Shares respond to the evidence
through the probability ``p`` that the target treatment is cost effective.
Three response shapes are supported:

* ``ThresholdLinearShare``: zero uptake below a threshold, then linear growth
  that reaches full uptake at ``saturation_at``.
* ``StepShare``: all-or-nothing adoption of whichever treatment looks best.
  Inside the value assembly this puts the whole market on the treatment with
  the highest posterior mean net benefit, which is exactly what the
  unadjusted value-of-information estimators assume.
* ``TableShare``: piecewise-linear interpolation through user breakpoints.

The assembly below combines per-dataset posterior mean net benefits ``mu``
(an S x D matrix) with the per-dataset shares and subtracts the value of the
market as it stands today, yielding the implementation-adjusted expected value
of the study.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import PsaSample

__all__ = [
    "ThresholdLinearShare",
    "StepShare",
    "TableShare",
    "MarketShareFunction",
    "CurrentShares",
    "market_share",
    "share_matrix",
    "current_decision_value",
    "assemble_evsi_im",
    "evsi_im_terms",
]


@dataclass(frozen=True)
class ThresholdLinearShare:
    """Uptake 0 below ``threshold``, then linear, saturating at 1.

    ``target`` is the 0-based index of the treatment whose share follows the
    curve; the other treatment receives the complement.
    """

    threshold: float
    saturation_at: float = 1.0
    target: int = 1

    def __post_init__(self) -> None:
        if not 0.0 <= self.threshold < 1.0:
            raise ValueError("threshold must lie in [0, 1)")
        if not self.threshold < self.saturation_at <= 1.0:
            raise ValueError("saturation_at must lie in (threshold, 1]")
        if self.target < 0:
            raise ValueError("target must be a nonnegative treatment index")

    def target_share(self, p):
        p = np.asarray(p, dtype=float)
        raw = (p - self.threshold) / (self.saturation_at - self.threshold)
        share = np.clip(raw, 0.0, 1.0)
        share = np.where(p < self.threshold, 0.0, share)
        if share.ndim == 0:
            return float(share)
        return share


@dataclass(frozen=True)
class StepShare:
    """Whole market to the apparently best treatment.

    Applied to a probability alone the step sits at 1/2 (ties keep the
    incumbent); applied inside the assembly it follows the argmax of the
    posterior mean net benefits, ties to the lowest index.
    """

    target: int = 1

    def target_share(self, p):
        p = np.asarray(p, dtype=float)
        share = (p > 0.5).astype(float)
        if share.ndim == 0:
            return float(share)
        return share


@dataclass(frozen=True)
class TableShare:
    """Piecewise-linear uptake through (probability, share) breakpoints."""

    points: tuple[tuple[float, float], ...]
    target: int = 1

    def __post_init__(self) -> None:
        pts = tuple((float(p), float(s)) for p, s in self.points)
        object.__setattr__(self, "points", pts)
        if len(pts) < 2:
            raise ValueError("need at least two breakpoints")
        ps = np.array([p for p, _ in pts])
        ss = np.array([s for _, s in pts])
        if np.any(ps < 0.0) or np.any(ps > 1.0) or np.any(np.diff(ps) <= 0.0):
            raise ValueError("breakpoint probabilities must be strictly increasing within [0, 1]")
        if np.any(ss < 0.0) or np.any(ss > 1.0) or np.any(np.diff(ss) < 0.0):
            raise ValueError("breakpoint shares must be nondecreasing within [0, 1]")

    def target_share(self, p):
        p = np.asarray(p, dtype=float)
        ps = np.array([q for q, _ in self.points])
        ss = np.array([s for _, s in self.points])
        share = np.interp(p, ps, ss)
        if share.ndim == 0:
            return float(share)
        return share


MarketShareFunction = ThresholdLinearShare | StepShare | TableShare


@dataclass(frozen=True)
class CurrentShares:
    """How the market is split before the study reports."""

    shares: tuple[float, ...]

    def __post_init__(self) -> None:
        shares = tuple(float(s) for s in self.shares)
        object.__setattr__(self, "shares", shares)
        arr = np.array(shares)
        if arr.ndim != 1 or arr.size < 2:
            raise ValueError("need one share per treatment, at least two treatments")
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise ValueError("shares must lie in [0, 1]")
        if abs(arr.sum() - 1.0) > 1e-9:
            raise ValueError("shares must sum to 1")

    def as_array(self) -> np.ndarray:
        return np.array(self.shares)


def market_share(fn: MarketShareFunction, p) -> np.ndarray:
    """Both treatments' market shares given the probability for the target.

    Two-treatment rule: the target treatment takes ``fn.target_share(p)``, the
    other one the complement.  Components always sum to exactly 1.
    """
    p = np.asarray(p, dtype=float)
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    s = np.asarray(fn.target_share(p))
    if fn.target not in (0, 1):
        raise ValueError("probability-driven shares are defined for two treatments")
    out = np.empty(p.shape + (2,))
    out[..., fn.target] = s
    out[..., 1 - fn.target] = 1.0 - s
    return out


def share_matrix(fn: MarketShareFunction, p_target: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Per-dataset shares, S x D, for the value assembly.

    ``StepShare`` allocates the market by the argmax of each row of ``mu``
    (ties to the lowest index); the probability-driven shapes read
    ``p_target`` and require D = 2.
    """
    mu = np.asarray(mu, dtype=float)
    n, d = mu.shape
    if isinstance(fn, StepShare):
        winners = np.argmax(mu, axis=1)
        out = np.zeros((n, d))
        out[np.arange(n), winners] = 1.0
        return out
    if d != 2:
        raise ValueError("probability-driven shares are defined for two treatments")
    p_target = np.asarray(p_target, dtype=float)
    if p_target.shape != (n,):
        raise ValueError("p_target must have one probability per dataset")
    return market_share(fn, p_target)


def current_decision_value(psa: PsaSample, shares: CurrentShares) -> float:
    """Expected net benefit of the market as currently split."""
    m = shares.as_array()
    means = psa.nb.mean(axis=0)
    if m.size != means.size:
        raise ValueError("share vector length must match the number of treatments")
    return float(np.sum(m * means))


def evsi_im_terms(mu: np.ndarray, p_target: np.ndarray, fn: MarketShareFunction,
                  shares: CurrentShares) -> np.ndarray:
    """Per-dataset contributions whose mean is the adjusted value.

    Term s is the share-weighted posterior mean net benefit after the study
    minus the same datasets' value under today's shares; averaging these gives
    ``assemble_evsi_im`` up to a reordering of exact sums, and their spread
    yields a delta-method standard error.
    """
    mu = np.asarray(mu, dtype=float)
    m_after = share_matrix(fn, p_target, mu)
    m_now = shares.as_array()
    if m_now.size != mu.shape[1]:
        raise ValueError("share vector length must match the number of treatments")
    return np.sum(m_after * mu, axis=1) - np.sum(m_now * mu, axis=1)


def assemble_evsi_im(mu: np.ndarray, p_target: np.ndarray, fn: MarketShareFunction,
                     shares: CurrentShares) -> float:
    """Implementation-adjusted expected value of a study.

    ``mean_s sum_d share_d(X_s) mu[s, d]`` minus ``sum_d share_d_now *
    mean_s mu[s, d]``: what the market is expected to be worth once shares
    respond to the study, less what the same simulations say the current
    split is worth.  Both terms are computed from ``mu``, so the common
    simulation noise cancels.
    """
    mu = np.asarray(mu, dtype=float)
    m_after = share_matrix(fn, p_target, mu)
    m_now = shares.as_array()
    if m_now.size != mu.shape[1]:
        raise ValueError("share vector length must match the number of treatments")
    value_after = float(np.mean(np.sum(m_after * mu, axis=1)))
    value_now = float(np.sum(m_now * mu.mean(axis=0)))
    return value_after - value_now
