"""Latent-variable augmentation for thinned-process survival sampling.

A subject's event process is a nonhomogeneous Poisson process with rate
``lam0(t) * W * Phi(l(t, x))`` realized by thinning a candidate process of
rate ``lam0(t) * W``.  Conditional on the observed window the rejected
candidate points are themselves Poisson, which restores conjugacy: given
the rejected points and probit latents, the ensemble l sees a Gaussian
regression and the baseline/frailty updates are (conditionally) standard.

Interval- and left-censored subjects first impute an event time inside
their window by simulating the first accepted candidate point, then augment
exactly like an uncensored subject at the imputed time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hazard import BaselineHazard, cumulative_hazard, inverse_cumulative_hazard
from .rng import RngStream, normal_cdf, sample_truncated_normal

__all__ = [
    "SubjectRecord",
    "AugmentedSubject",
    "AugmentationError",
    "sample_rejected_points",
    "sample_probit_latents",
    "impute_interval_time",
    "first_accepted_time",
    "simulate_event_time",
]

# Candidate-batch cap for interval imputation; windows whose acceptance
# probability is this unlucky indicate a numerically degenerate state.
_MAX_IMPUTE_ROUNDS = 1_000_000


class AugmentationError(RuntimeError):
    """Imputation failed to accept a candidate within the round budget."""


@dataclass(frozen=True)
class SubjectRecord:
    """One observation: a window [lower, upper] containing the event time.

    ``lower == upper``      exact (uncensored) event time
    ``upper == inf``        right-censored at ``lower``
    ``lower == 0``          left-censored at ``upper`` (event in (0, upper])
    otherwise               interval-censored on (lower, upper]
    """

    cluster: int
    lower: float
    upper: float
    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        if not (0.0 <= self.lower <= self.upper):
            raise ValueError(f"bad window [{self.lower}, {self.upper}]")
        if self.is_exact and self.lower <= 0.0:
            raise ValueError("exact event times must be positive")

    @property
    def is_exact(self) -> bool:
        return self.lower == self.upper

    @property
    def is_right_censored(self) -> bool:
        return math.isinf(self.upper)

    @property
    def needs_imputation(self) -> bool:
        return not self.is_exact and not self.is_right_censored


@dataclass
class AugmentedSubject:
    """Current latent state of one subject within the sampler.

    ``time`` is the exact or imputed event time (right-censored: the
    censoring time); ``rejected`` are the thinned candidate times in
    (0, time); ``latents`` are the probit responses, one negative latent
    per rejected point plus, when an event occurs at ``time``, one positive
    latent for it (ordered: rejected first, event last).
    """

    record: SubjectRecord
    time: float
    has_event: bool
    rejected: np.ndarray = field(default_factory=lambda: np.empty(0))
    latents: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def n_rejected(self) -> int:
        return len(self.rejected)

    def latent_times(self) -> np.ndarray:
        """Times the ensemble must be evaluated at, aligned with ``latents``."""
        if self.has_event:
            return np.append(self.rejected, self.time)
        return self.rejected


def sample_rejected_points(
    ell, time: float, frailty: float, baseline: BaselineHazard, rng: RngStream
) -> np.ndarray:
    """Thinned candidate points on (0, time) given the subject's ensemble ell.

    Draws q ~ Poisson(W * Lam0(time)) candidates, maps uniform cumulative-
    hazard coordinates through the inverse baseline, and keeps each with
    probability 1 - Phi(l(g, x)) — the candidates the event process rejected.
    """
    total = frailty * cumulative_hazard(baseline, time)
    q = rng.generator.poisson(total) if total > 0.0 else 0
    if q == 0:
        return np.empty(0)
    c = rng.uniform(0.0, total, size=q)
    g = inverse_cumulative_hazard(baseline, c / frailty)
    keep = rng.random(q) <= 1.0 - normal_cdf(ell(g))
    return np.sort(g[keep])


def sample_probit_latents(values: np.ndarray, has_event: bool, rng: RngStream) -> np.ndarray:
    """Truncated-normal probit latents for ensemble values at latent times.

    Rejected points get Z ~ N(value, 1) truncated negative; the trailing
    event point (when present) gets the positive truncation.
    """
    values = np.atleast_1d(np.asarray(values, dtype=float))
    out = np.empty(len(values))
    n_neg = len(values) - 1 if has_event else len(values)
    for i in range(n_neg):
        out[i] = sample_truncated_normal(values[i], "negative", rng)
    if has_event:
        out[-1] = sample_truncated_normal(values[-1], "positive", rng)
    return out


def _positive_poisson(mean: float, rng: RngStream) -> int:
    """Zero-truncated Poisson draw.

    Inverse CDF over the conditional pmf for small means (naive rejection
    stalls as mean -> 0); plain rejection once zero is negligible.
    """
    if not (mean > 0.0) or not math.isfinite(mean):
        raise ValueError(f"mean must be positive and finite, got {mean}")
    gen = rng.generator
    if mean > 30.0:
        while True:
            q = gen.poisson(mean)
            if q > 0:
                return q
    # P(K=k | K>0) accumulated until the uniform is covered.
    u = gen.random() * -math.expm1(-mean)
    term = math.exp(-mean) * mean
    acc, k = term, 1
    while acc < u and k < 10_000:
        k += 1
        term *= mean / k
        acc += term
    return k


def first_accepted_time(
    ell, lower: float, upper: float, frailty: float, baseline: BaselineHazard, rng: RngStream
) -> float:
    """First accepted candidate point in the window (lower, upper].

    Repeatedly draws a positive number of candidates with cumulative-hazard
    coordinates uniform on (W*Lam0(lower), W*Lam0(upper)], accepts each with
    probability Phi(l(g, x)), and returns the smallest accepted time once a
    round accepts at least one.  This is the conditional event-time draw for
    a window known to contain the event.
    """
    lo = frailty * cumulative_hazard(baseline, lower)
    hi = frailty * cumulative_hazard(baseline, upper)
    if not hi > lo:
        raise AugmentationError(f"empty hazard window [{lower}, {upper}]")
    mean = hi - lo
    for _ in range(_MAX_IMPUTE_ROUNDS):
        q = _positive_poisson(mean, rng)
        c = rng.uniform(lo, hi, size=q)
        g = inverse_cumulative_hazard(baseline, c / frailty)
        accepted = g[rng.random(q) <= normal_cdf(ell(g))]
        if accepted.size:
            return float(accepted.min())
    raise AugmentationError(
        f"no candidate accepted in ({lower}, {upper}] after {_MAX_IMPUTE_ROUNDS} rounds"
    )


def impute_interval_time(
    record: SubjectRecord, ell, frailty: float, baseline: BaselineHazard, rng: RngStream
) -> float:
    """Event-time draw for an interval- or left-censored record."""
    if not record.needs_imputation:
        raise ValueError("record is exact or right-censored; nothing to impute")
    return first_accepted_time(ell, record.lower, record.upper, frailty, baseline, rng)


def simulate_event_time(
    ell, frailty: float, baseline: BaselineHazard, horizon: float, rng: RngStream
) -> tuple[float, bool]:
    """Forward-simulate one subject on (0, horizon] from the thinned process.

    Returns ``(time, has_event)``; when no candidate is accepted before the
    horizon the subject is right-censored there.  This is the model's exact
    generative mechanism, so it pairs with the sampler for joint-distribution
    (prior-vs-posterior) validation.
    """
    total = frailty * cumulative_hazard(baseline, horizon)
    q = rng.generator.poisson(total) if total > 0.0 else 0
    if q:
        c = rng.uniform(0.0, total, size=q)
        g = inverse_cumulative_hazard(baseline, c / frailty)
        accepted = g[rng.random(q) <= normal_cdf(ell(g))]
        if accepted.size:
            return float(accepted.min()), True
    return horizon, False
