"""Outcome assessment from an empirical return distribution.

Partial moments of the returns about an acceptance threshold are combined
into a ratio and squashed through a logistic onto a bounded confidence
scale ``[low, high]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_finite_real, check_positive_int, check_samples, check_scale
from .exceptions import InvalidInputError, NotFittedError
from .mdp import OutcomeSamples, sample_return_distribution


@dataclass(frozen=True)
class XoParams:
    """Threshold and mapping parameters.

    ``alpha`` is a stand-in sharpness; 1 gives ``upm / (upm + lpm)`` on the
    unit interval before scaling.
    """

    r_bar: float = 0.0
    moment_order: int = 1
    alpha: float = 1.0
    scale_low: float = -1.0
    scale_high: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "r_bar", check_finite_real(self.r_bar, "r_bar"))
        object.__setattr__(self, "moment_order", check_positive_int(self.moment_order, "moment_order"))
        alpha = check_finite_real(self.alpha, "alpha")
        if alpha <= 0:
            raise InvalidInputError(f"alpha must be > 0, got {alpha}")
        object.__setattr__(self, "alpha", alpha)
        low, high = check_scale(self.scale_low, self.scale_high)
        object.__setattr__(self, "scale_low", low)
        object.__setattr__(self, "scale_high", high)

    def to_dict(self):
        return {
            "r_bar": self.r_bar,
            "moment_order": self.moment_order,
            "alpha": self.alpha,
            "scale_low": self.scale_low,
            "scale_high": self.scale_high,
        }


@dataclass(frozen=True)
class OutcomeAssessment:
    upm: float
    lpm: float
    ratio: float
    x_o: float
    params: XoParams
    n_samples: int
    mean: float
    sd: float
    min: float
    max: float
    seed: int | None = None
    horizon: int | None = None

    def to_dict(self):
        return {
            "upm": self.upm,
            "lpm": self.lpm,
            "ratio": self.ratio,
            "x_o": self.x_o,
            "params": self.params.to_dict(),
            "n_samples": self.n_samples,
            "summary": {"mean": self.mean, "sd": self.sd, "min": self.min, "max": self.max},
            "seed": self.seed,
            "horizon": self.horizon,
        }


def _returns_of(samples):
    if isinstance(samples, OutcomeSamples):
        return check_samples(samples.returns)
    return check_samples(samples)


def partial_moments(samples, r_bar, n=1):
    """Upper and lower partial moments of order ``n`` about ``r_bar``."""
    x = _returns_of(samples)
    n = check_positive_int(n, "n")
    r_bar = check_finite_real(r_bar, "r_bar")
    upm = float(np.mean(np.maximum(0.0, x - r_bar) ** n))
    lpm = float(np.mean(np.maximum(0.0, r_bar - x) ** n))
    return upm, lpm


def moment_ratio(upm, lpm):
    if lpm == 0.0:
        return math.inf if upm > 0 else math.nan
    return upm / lpm


def xo_from_moments(upm, lpm, params=None):
    """Map partial moments to the confidence scale.

    ``low + (high - low) * logistic(alpha * ln(upm / lpm))``. The end points
    are reserved for one-sided mass: a nonzero lower moment never yields
    ``high`` and vice versa, even when the logistic rounds to 0 or 1.
    """
    params = params or XoParams()
    upm = check_finite_real(upm, "upm")
    lpm = check_finite_real(lpm, "lpm")
    if upm < 0 or lpm < 0:
        raise InvalidInputError("partial moments must be nonnegative")
    low, high = params.scale_low, params.scale_high
    if upm == 0.0 and lpm == 0.0:
        return 0.5 * (low + high)
    if lpm == 0.0:
        return high
    if upm == 0.0:
        return low
    # low + (high - low) * logistic(t), written via tanh to keep precision near the midpoint
    t = params.alpha * (math.log(upm) - math.log(lpm))
    x = 0.5 * (low + high) + 0.5 * (high - low) * math.tanh(0.5 * t)
    if x >= high:
        x = math.nextafter(high, low)
    elif x <= low:
        x = math.nextafter(low, high)
    return x


def outcome_from_samples(samples, params=None):
    """Full :class:`OutcomeAssessment` from an empirical return sample."""
    params = params or XoParams()
    x = _returns_of(samples)
    upm, lpm = partial_moments(x, params.r_bar, params.moment_order)
    seed = samples.seed if isinstance(samples, OutcomeSamples) else None
    horizon = samples.horizon if isinstance(samples, OutcomeSamples) else None
    return OutcomeAssessment(
        upm=upm,
        lpm=lpm,
        ratio=moment_ratio(upm, lpm),
        x_o=xo_from_moments(upm, lpm, params),
        params=params,
        n_samples=int(x.size),
        mean=float(np.mean(x)),
        sd=float(np.std(x, ddof=1)) if x.size > 1 else 0.0,
        min=float(np.min(x)),
        max=float(np.max(x)),
        seed=seed,
        horizon=horizon,
    )


def assess_outcome(mdp, solve_result, params=None, n_rollouts=2000, master_seed=0, horizon=None, n_jobs=None):
    """Sample returns of ``solve_result.policy`` from the initial state and assess them.

    Returns ``(assessment, samples)``.
    """
    samples = sample_return_distribution(
        mdp, solve_result.policy, mdp.initial_state, n_rollouts, horizon, master_seed, n_jobs
    )
    return outcome_from_samples(samples, params), samples


class OutcomeAssessor(BaseEstimator):
    """Estimator form of the outcome assessment.

    ``fit`` consumes a 1-d array of returns (or :class:`OutcomeSamples`) and
    stores ``upm_``, ``lpm_``, ``x_o_`` and ``assessment_``.
    """

    def __init__(self, r_bar=0.0, moment_order=1, alpha=1.0, scale_low=-1.0, scale_high=1.0):
        self.r_bar = r_bar
        self.moment_order = moment_order
        self.alpha = alpha
        self.scale_low = scale_low
        self.scale_high = scale_high

    def _params(self):
        return XoParams(self.r_bar, self.moment_order, self.alpha, self.scale_low, self.scale_high)

    def fit(self, X, y=None):
        self.assessment_ = outcome_from_samples(X, self._params())
        self.upm_ = self.assessment_.upm
        self.lpm_ = self.assessment_.lpm
        self.x_o_ = self.assessment_.x_o
        return self

    def score(self, X=None, y=None):
        """The fitted ``x_o`` (arguments are ignored)."""
        if not hasattr(self, "assessment_"):
            raise NotFittedError("OutcomeAssessor is not fitted yet")
        return self.x_o_
