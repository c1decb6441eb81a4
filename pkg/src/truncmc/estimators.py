"""Return estimation from truncated batches, with confidence intervals.

The estimator averages each step's discounted reward over however many
trajectories reached that step: with ``n_t`` samples of step ``t``, every
reward at that step enters with weight ``gamma^t / n_t``.  Summed over a
schedule-conforming batch this is unbiased for the horizon-``T`` discounted
return, whatever the length allocation, because step ``t`` appears in exactly
the ``n_t`` trajectories that are long enough.

Off-policy estimation reuses the same accumulation with one importance
weight per trajectory (likelihood ratio of the action sequence under target
vs. behavior policy), so the on-policy estimate is literally the weights-
equal-one special case.  Interval constructions:

* :func:`hoeffding_interval` — exponential-tail width for bounded rewards,
  driven by the per-step coefficient profile of the schedule;
* :func:`variance_penalty` — Cantelli-style width for importance-weighted
  estimates, using the empirical second moment of the likelihood ratios
  (per-length in the tight form, a single full-horizon bound in the loose
  form).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .batches import TruncatedBatch
from .errors import AbsoluteContinuityError, DomainError
from .policies import SoftmaxPolicy, state_renyi2
from .schedule import Schedule, _check_delta, coefficients, confidence_width


def _resolve_gamma(schedule: Schedule, gamma: float | None) -> float:
    """The discount to use, insisting it agree with the schedule's, if any."""
    if gamma is None:
        if schedule.gamma is None:
            raise DomainError("no discount factor: pass gamma= or build the schedule with one")
        return schedule.gamma
    gamma = float(gamma)
    if not 0.0 < gamma <= 1.0:
        raise DomainError(f"discount factor must lie in (0, 1], got {gamma!r}")
    if schedule.gamma is not None and schedule.gamma != gamma:
        raise DomainError(
            f"discount {gamma} disagrees with the schedule's {schedule.gamma}"
        )
    return gamma


def _per_trajectory_terms(batch: TruncatedBatch, gamma: float) -> np.ndarray:
    """Each trajectory's contribution before importance weighting."""
    schedule = batch.schedule
    disc = gamma ** np.arange(schedule.horizon) / schedule.n
    return np.array(
        [disc[:h] @ traj.rewards for h, traj in batch.iter_with_length()]
    )


def weighted_estimate(
    batch: TruncatedBatch, weights: np.ndarray, gamma: float | None = None
) -> float:
    """Accumulate per-trajectory terms times per-trajectory weights."""
    gamma = _resolve_gamma(batch.schedule, gamma)
    terms = _per_trajectory_terms(batch, gamma)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != terms.shape:
        raise DomainError(
            f"need one weight per trajectory ({terms.size}), got shape {weights.shape}"
        )
    return float(np.sum(terms * weights))


def estimate_return(batch: TruncatedBatch, gamma: float | None = None) -> float:
    """On-policy return estimate: the unit-weight case of the shared core."""
    n_traj = sum(int(c) for c in batch.schedule.m)
    return weighted_estimate(batch, np.ones(n_traj), gamma)


def importance_weights(
    batch: TruncatedBatch, target: SoftmaxPolicy, clip: float | None = None
) -> np.ndarray:
    """Per-trajectory likelihood ratios of target vs. behavior actions.

    Log-ratios are accumulated step by step and exponentiated once, then
    clipped from above if ``clip`` is given (the clip acts on the weight
    itself, after exponentiation).  A taken action to which the target
    assigns zero probability has no finite ratio and is rejected.
    """
    if clip is not None and clip <= 0:
        raise DomainError(f"weight clip must be positive, got {clip}")
    weights = np.empty(sum(int(c) for c in batch.schedule.m))
    for j, (h, traj) in enumerate(batch.iter_with_length()):
        log_ratio = 0.0
        for t in range(h):
            p = target.action_probs(traj.observations[t])[traj.actions[t]]
            if p <= 0.0:
                raise AbsoluteContinuityError(
                    "target policy assigns zero probability to a realized action"
                )
            log_ratio += np.log(p) - traj.behavior_log_probs[t]
        with np.errstate(over="ignore"):  # huge ratios saturate to inf; clip below
            w = float(np.exp(log_ratio))
        weights[j] = min(w, clip) if clip is not None else w
    return weights


def off_policy_estimate(
    batch: TruncatedBatch,
    target: SoftmaxPolicy,
    gamma: float | None = None,
    clip: float | None = None,
) -> float:
    """Importance-weighted return estimate of ``target`` from behavior data."""
    return weighted_estimate(batch, importance_weights(batch, target, clip), gamma)


# ---------------------------------------------------------------------------
# intervals


def hoeffding_interval(
    value: float,
    schedule: Schedule,
    delta: float,
    gamma: float | None = None,
    reward_range: float = 1.0,
) -> tuple[float, float]:
    """Two-sided interval for an on-policy estimate with bounded rewards.

    ``reward_range`` is the length of the interval containing every reward
    (``2 * r_max`` for rewards in ``[-r_max, r_max]``); the width scales
    linearly with it.
    """
    gamma = _resolve_gamma(schedule, gamma)
    if reward_range <= 0:
        raise DomainError(f"reward range must be positive, got {reward_range}")
    coeffs = coefficients(gamma, schedule.horizon)
    half = reward_range * confidence_width(schedule.n, coeffs, delta)
    return (value - half, value + half)


def empirical_renyi_profile(
    batch: TruncatedBatch, target: SoftmaxPolicy, behavior: SoftmaxPolicy
) -> np.ndarray:
    """Per-length second-moment estimates of the likelihood ratio.

    Entry ``h - 1`` averages, over the ``n[h - 1]`` trajectories that reached
    step ``h``, the product over the first ``h`` steps of the per-state ratio
    second moment ``sum_a target(a|s)^2 / behavior(a|s)``.
    """
    schedule = batch.schedule
    sums = np.zeros(schedule.horizon)
    for h, traj in batch.iter_with_length():
        factors = np.array(
            [
                state_renyi2(target, behavior, traj.observations[t])
                for t in range(h)
            ]
        )
        sums[:h] += np.cumprod(factors)
    return sums / schedule.n


def variance_penalty(
    schedule: Schedule,
    delta: float,
    renyi_profile: np.ndarray,
    r_max: float,
    gamma: float | None = None,
    loose: bool = False,
) -> float:
    """Cantelli-style deviation width for an importance-weighted estimate.

    The tight form weighs each trajectory length by its own ratio second
    moment; the loose form bounds every length by the full-horizon value and
    collapses to the coefficient sum ``sum_t c_t / n_t``.  At a uniform
    (all-full-length) schedule the tight form equals the classical
    ``phi * sqrt(T * beta * renyi / budget)`` with
    ``phi = r_max (1 - gamma^T) / (1 - gamma)``.
    """
    gamma = _resolve_gamma(schedule, gamma)
    _check_delta(delta)
    if r_max < 0:
        raise DomainError(f"reward bound must be non-negative, got {r_max}")
    renyi_profile = np.asarray(renyi_profile, dtype=float)
    if renyi_profile.shape != (schedule.horizon,):
        raise DomainError("need one ratio second moment per trajectory length")
    beta = (1.0 - delta) / delta
    if loose:
        coeffs = coefficients(gamma, schedule.horizon)
        return float(
            r_max * np.sqrt(beta * renyi_profile[-1] * np.sum(coeffs / schedule.n))
        )
    prefix = np.cumsum(gamma ** np.arange(schedule.horizon) / schedule.n)
    return float(
        r_max * np.sqrt(beta * np.sum(schedule.m * prefix**2 * renyi_profile))
    )


# ---------------------------------------------------------------------------
# one-call reports


@dataclass(frozen=True)
class EstimateReport:
    """An estimate with its interval and the settings that produced it."""

    value: float
    low: float
    high: float
    delta: float
    gamma: float
    method: str
    budget: int
    horizon: int
    clip: float | None = None
    renyi_final: float | None = None

    @property
    def half_width(self) -> float:
        return (self.high - self.low) / 2.0


def evaluate_on_policy(
    batch: TruncatedBatch,
    delta: float,
    gamma: float | None = None,
    reward_range: float = 1.0,
) -> EstimateReport:
    gamma = _resolve_gamma(batch.schedule, gamma)
    value = estimate_return(batch, gamma)
    low, high = hoeffding_interval(value, batch.schedule, delta, gamma, reward_range)
    return EstimateReport(
        value=value,
        low=low,
        high=high,
        delta=delta,
        gamma=gamma,
        method="on-policy-hoeffding",
        budget=batch.schedule.budget,
        horizon=batch.schedule.horizon,
    )


def evaluate_off_policy(
    batch: TruncatedBatch,
    target: SoftmaxPolicy,
    behavior: SoftmaxPolicy,
    delta: float,
    r_max: float,
    gamma: float | None = None,
    clip: float | None = None,
    loose: bool = False,
) -> EstimateReport:
    gamma = _resolve_gamma(batch.schedule, gamma)
    value = off_policy_estimate(batch, target, gamma, clip)
    profile = empirical_renyi_profile(batch, target, behavior)
    penalty = variance_penalty(
        batch.schedule, delta, profile, r_max, gamma, loose=loose
    )
    return EstimateReport(
        value=value,
        low=value - penalty,
        high=value + penalty,
        delta=delta,
        gamma=gamma,
        method="off-policy-loose" if loose else "off-policy-tight",
        budget=batch.schedule.budget,
        horizon=batch.schedule.horizon,
        clip=clip,
        renyi_final=float(profile[-1]),
    )
