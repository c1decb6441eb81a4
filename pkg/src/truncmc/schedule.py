"""Budget-optimal trajectory-length schedules for Monte Carlo return estimation.

A *schedule* decides, for a fixed interaction budget of ``budget`` transitions,
how many trajectories to roll out at each truncation length ``h = 1..horizon``.
Two equivalent encodings are used throughout:

* ``m`` — trajectory counts per length: ``m[h-1]`` trajectories are truncated
  after exactly ``h`` steps;
* ``n`` — sample counts per step: ``n[t]`` trajectories are still alive at
  step ``t``, i.e. ``n[t] = sum(m[t:])``.

``n`` is always positive and non-increasing, and ``sum(n) = sum(m * lengths)``
equals the budget.  Allocating more samples to early steps is worthwhile
because step ``t`` enters the squared confidence width of the truncated
return estimator with weight ``c_t / n_t``, where the coefficients ``c_t``
decay with ``t`` (see :func:`coefficients`).  :func:`solve_relaxed` minimizes
that width over fractional ``n`` in closed form and :func:`round_allocation`
turns the result into a valid integer schedule at a bounded cost in width.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BiasedScheduleError,
    BudgetMismatchError,
    DomainError,
    InternalCheckError,
)

#: Leading constant of the sample-complexity bounds reported by :func:`pac_budget`.
PAC_CONSTANT = 12

#: Size guards for the exhaustive optimizer, which enumerates every feasible
#: integer allocation and is meant as a test oracle only.
BRUTE_FORCE_MAX_HORIZON = 6
BRUTE_FORCE_MAX_BUDGET = 24


def _check_gamma(gamma: float) -> float:
    if not (0.0 < gamma < 1.0):
        raise DomainError(f"discount factor must lie in (0, 1), got {gamma!r}")
    return float(gamma)


def _check_horizon(horizon: int) -> int:
    if not isinstance(horizon, (int, np.integer)) or horizon < 1:
        raise DomainError(f"horizon must be a positive integer, got {horizon!r}")
    return int(horizon)


def _check_delta(delta: float) -> float:
    if not (0.0 < delta < 1.0):
        raise DomainError(f"confidence level delta must lie in (0, 1), got {delta!r}")
    return float(delta)


def coefficients(gamma: float, horizon: int) -> np.ndarray:
    """Per-step weights of the squared confidence width.

    ``c_t = gamma^t * (gamma^t + gamma^(t+1) - 2*gamma^T) / (1 - gamma)`` for
    ``t = 0..T-1``.  Computed in the cancellation-free form
    ``c_t = gamma^t * (gamma^t * G(T-t) + gamma^(t+1) * G(T-t-1))`` with
    ``G(k) = sum_{j<k} gamma^j``, which keeps every term positive and makes
    ``c_{T-1} = gamma^(2(T-1))`` hold exactly.  The result is strictly
    decreasing and positive; monotonicity is clamped if extreme underflow
    ever breaks it.
    """
    gamma = _check_gamma(gamma)
    horizon = _check_horizon(horizon)
    powers = np.empty(horizon + 1)
    powers[0] = 1.0
    # iterative products rather than ** so that adjacent powers stay consistent
    for t in range(1, horizon + 1):
        powers[t] = powers[t - 1] * gamma
    geom = np.concatenate(([0.0], np.cumsum(powers[:horizon])))  # geom[k] = sum_{j<k} gamma^j
    p = powers[:horizon]
    c = p * (p * geom[horizon:0:-1] + powers[1 : horizon + 1] * geom[horizon - 1 :: -1])
    for t in range(1, horizon):
        if c[t] >= c[t - 1]:  # only reachable under denormal underflow
            c[t] = np.nextafter(c[t - 1], 0.0)
    if c[-1] <= 0.0:
        raise InternalCheckError("confidence weights underflowed to zero")
    return c


def samples_per_step(m: np.ndarray | list[int]) -> np.ndarray:
    """Convert trajectory counts per length into sample counts per step.

    ``n[t] = sum(m[t:])``: a trajectory of length ``h`` contributes one sample
    to every step ``t < h``.
    """
    m = np.asarray(m)
    if m.ndim != 1 or m.size == 0:
        raise DomainError("length counts must be a non-empty 1-d array")
    if not np.issubdtype(m.dtype, np.integer) or np.any(m < 0):
        raise DomainError("length counts must be non-negative integers")
    return np.cumsum(m[::-1])[::-1].astype(np.int64)


def trajectories_per_length(n: np.ndarray | list[int]) -> np.ndarray:
    """Convert sample counts per step into trajectory counts per length.

    Inverse of :func:`samples_per_step`: ``m[h-1] = n[h-1] - n[h]`` with
    ``m[T-1] = n[T-1]``.  Requires ``n`` positive and non-increasing.
    """
    n = np.asarray(n)
    if n.ndim != 1 or n.size == 0:
        raise DomainError("sample counts must be a non-empty 1-d array")
    if not np.issubdtype(n.dtype, np.integer) or np.any(n < 1):
        raise DomainError("sample counts must be positive integers")
    if np.any(np.diff(n) > 0):
        raise DomainError("sample counts must be non-increasing in the step index")
    m = np.empty_like(n, dtype=np.int64)
    m[:-1] = n[:-1] - n[1:]
    m[-1] = n[-1]
    return m


@dataclass(frozen=True)
class Schedule:
    """A validated trajectory-length schedule.

    ``m[h-1]`` trajectories are collected at truncation length ``h``; ``n[t]``
    of them are still alive at step ``t``.  ``gamma`` records the discount
    factor the schedule was optimized for (``None`` for hand-built schedules);
    estimators refuse to mix a schedule with a different discount factor.
    """

    m: np.ndarray
    n: np.ndarray
    budget: int
    horizon: int
    gamma: float | None = None

    @staticmethod
    def from_lengths(
        m: np.ndarray | list[int], budget: int, gamma: float | None = None
    ) -> "Schedule":
        m = np.asarray(m)
        n = samples_per_step(m)
        m = m.astype(np.int64)
        spent = int(np.sum(m * np.arange(1, m.size + 1)))
        if spent != budget:
            raise BudgetMismatchError(
                f"length counts spend {spent} transitions, budget is {budget}"
            )
        if m[-1] < 1:
            raise BiasedScheduleError(
                "no full-horizon trajectory: at least one trajectory must run "
                "to the horizon for the estimator to be unbiased"
            )
        if gamma is not None:
            gamma = _check_gamma(gamma)
        return Schedule(m=m, n=n, budget=int(budget), horizon=int(m.size), gamma=gamma)

    @staticmethod
    def from_samples(n: np.ndarray | list[int], gamma: float | None = None) -> "Schedule":
        n = np.asarray(n)
        m = trajectories_per_length(n)
        return Schedule.from_lengths(m, budget=int(np.sum(n)), gamma=gamma)

    def __post_init__(self) -> None:
        if self.m.size != self.horizon or self.n.size != self.horizon:
            raise InternalCheckError("schedule arrays do not match the horizon")


def validate_schedule(
    m: np.ndarray | list[int], budget: int, gamma: float | None = None
) -> Schedule:
    """Validate raw length counts against a budget and wrap them in a Schedule."""
    return Schedule.from_lengths(m, budget=budget, gamma=gamma)


def uniform_schedule(horizon: int, budget: int, gamma: float | None = None) -> Schedule:
    """The all-full-length schedule: ``budget/horizon`` trajectories, no truncation.

    When ``horizon`` does not divide ``budget`` the flat fractional allocation
    is rounded like :func:`round_allocation` rounds the optimum (floor, then
    one extra sample at each of the first ``budget mod horizon`` steps), which
    keeps the budget exact.
    """
    horizon = _check_horizon(horizon)
    if budget < horizon:
        raise DomainError(f"budget {budget} cannot cover one trajectory of length {horizon}")
    k, rem = divmod(int(budget), horizon)
    n = np.full(horizon, k, dtype=np.int64)
    n[:rem] += 1
    return Schedule.from_samples(n, gamma=gamma)


def confidence_width(
    n: np.ndarray | list[float], coeffs: np.ndarray, delta: float
) -> float:
    """Half-width of the deviation bound for a (possibly fractional) allocation.

    ``sqrt(0.5 * log(2/delta) * sum_t c_t / n_t)`` for rewards in ``[0, 1]``.
    """
    delta = _check_delta(delta)
    n = np.asarray(n, dtype=float)
    coeffs = np.asarray(coeffs, dtype=float)
    if n.shape != coeffs.shape:
        raise DomainError(
            f"allocation has {n.size} steps but there are {coeffs.size} coefficients"
        )
    if np.any(n <= 0):
        raise DomainError("sample counts must be positive")
    return math.sqrt(0.5 * math.log(2.0 / delta) * float(np.sum(coeffs / n)))


@dataclass(frozen=True)
class RelaxedAllocation:
    """Closed-form optimum of the width over fractional allocations.

    ``n_frac[t] = sqrt(c_t) * (budget - horizon + cutover) / sum_{i<cutover} sqrt(c_i)``
    for ``t < cutover`` and ``n_frac[t] = 1`` beyond: late steps whose weight
    is too small to earn more than the mandatory single sample sit at the
    floor, earlier steps share the remaining budget proportionally to
    ``sqrt(c_t)``.  ``width`` is the confidence width of ``n_frac`` at
    ``delta`` (the minimizer itself does not depend on ``delta``).
    """

    gamma: float
    horizon: int
    budget: int
    cutover: int
    n_frac: np.ndarray
    width: float
    delta: float = field(default=0.1)


def solve_relaxed(
    gamma: float, horizon: int, budget: int, delta: float = 0.1
) -> RelaxedAllocation:
    """Minimize the confidence width over fractional non-increasing allocations.

    Scans the cutover index and returns the unique one whose closed-form
    allocation satisfies both optimality conditions; a duplicate or missing
    cutover would mean the scan itself is broken and raises
    ``InternalCheckError``.  ``budget == horizon`` is the degenerate
    single-sample-per-step allocation.
    """
    gamma = _check_gamma(gamma)
    horizon = _check_horizon(horizon)
    delta = _check_delta(delta)
    if budget < horizon:
        raise DomainError(
            f"budget {budget} is below the horizon {horizon}; "
            "every step needs at least one sample"
        )
    c = coefficients(gamma, horizon)
    if budget == horizon:
        n = np.ones(horizon)
        return RelaxedAllocation(
            gamma, horizon, int(budget), 1, n, confidence_width(n, c, delta), delta
        )
    sq = np.sqrt(c)
    prefix = np.cumsum(sq)  # prefix[h-1] = sum_{i<h} sqrt(c_i)
    feasible = []
    for h in range(1, horizon + 1):
        spare = budget - horizon + h
        # the binding checks are at t = h (largest sqrt(c) at or past h) and
        # t = h-1 (smallest sqrt(c) before h); sqrt(c) is strictly decreasing
        below_cap = h == horizon or spare <= prefix[h - 1] / sq[h]
        above_floor = spare > prefix[h - 1] / sq[h - 1]
        if below_cap and above_floor:
            feasible.append(h)
    if len(feasible) != 1:
        raise InternalCheckError(
            f"cutover scan found {len(feasible)} candidates for "
            f"gamma={gamma}, horizon={horizon}, budget={budget}"
        )
    h = feasible[0]
    n = np.ones(horizon)
    n[:h] = sq[:h] * (budget - horizon + h) / prefix[h - 1]
    return RelaxedAllocation(
        gamma, horizon, int(budget), h, n, confidence_width(n, c, delta), delta
    )


def round_allocation(relaxed: RelaxedAllocation) -> Schedule:
    """Round a fractional optimum to a valid integer schedule.

    Floors every count, then adds the ``k = budget - sum(floors)`` leftover
    samples one each to the first ``k`` steps.  Each count moves by less than
    one, the result stays non-increasing and positive, and its width exceeds
    the fractional optimum by at most ``sqrt(2)``.
    """
    floors = np.floor(relaxed.n_frac).astype(np.int64)
    k = relaxed.budget - int(floors.sum())
    if not 0 <= k <= relaxed.horizon:
        raise InternalCheckError(f"rounding leftover {k} outside [0, {relaxed.horizon}]")
    n = floors
    n[:k] += 1
    if np.any(np.abs(n - relaxed.n_frac) > 1.0):
        raise InternalCheckError("rounded allocation strayed more than 1 from the optimum")
    return Schedule.from_samples(n, gamma=relaxed.gamma)


def optimal_schedule(
    gamma: float, horizon: int, budget: int, delta: float = 0.1
) -> Schedule:
    """Convenience wrapper: solve the relaxation and round it."""
    return round_allocation(solve_relaxed(gamma, horizon, budget, delta))


def saturation_budget(gamma: float, horizon: int) -> float:
    """Budget above which no step sits at the single-sample floor.

    ``sum_t sqrt(c_t) / sqrt(c_{T-1})``: for budgets at or past this value the
    relaxed optimum allocates ``n_frac[t] = sqrt(c_t) * budget / sum sqrt(c)``
    to every step (cutover equals the horizon).
    """
    c = coefficients(gamma, horizon)
    sq = np.sqrt(c)
    return float(np.sum(sq) / sq[-1])


def rounding_ratio_bound(relaxed: RelaxedAllocation) -> float:
    """Upper bound on rounded-over-fractional width for this instance.

    Generic bound ``sqrt(2)``; when the smallest fractional count exceeds one,
    every count is at least ``n_frac[T-1]`` and the sharper
    ``sqrt(n_frac[T-1] / (n_frac[T-1] - 1))`` applies.
    """
    tail = float(relaxed.n_frac[-1])
    if tail > 1.0:
        return math.sqrt(tail / (tail - 1.0))
    return math.sqrt(2.0)


@dataclass(frozen=True)
class PacBudget:
    """Sufficient budgets for an epsilon-accurate estimate at confidence delta."""

    uniform: float
    optimized: float
    improvement_factor: float
    condition_holds: bool
    constant: int = PAC_CONSTANT


def pac_budget(gamma: float, horizon: int, epsilon: float, delta: float) -> PacBudget:
    """Budgets that guarantee ``|estimate - J| <= epsilon`` w.p. ``1 - delta``.

    Uniform collection needs ``12 T log(2/delta) / ((1-gamma)^2 eps^2)``
    transitions; the optimized schedule needs the minimum of that and the
    horizon-free ``12 log(2/delta) / ((1-gamma)^3 eps^2)``, an improvement by
    ``max(1, T (1-gamma))``.  ``condition_holds`` reports the applicability
    requirement ``8 T eps^2 <= log(2/delta) c_0`` under which the guarantee
    is proved.
    """
    gamma = _check_gamma(gamma)
    horizon = _check_horizon(horizon)
    delta = _check_delta(delta)
    if epsilon <= 0:
        raise DomainError(f"accuracy epsilon must be positive, got {epsilon!r}")
    log_term = math.log(2.0 / delta)
    base = PAC_CONSTANT * log_term / epsilon**2
    uniform = base * horizon / (1.0 - gamma) ** 2
    horizon_free = base / (1.0 - gamma) ** 3
    optimized = min(uniform, horizon_free)
    # first confidence weight in closed form; the full vector underflows for
    # long, strongly discounted horizons where only c_0 is needed here
    c0 = (1.0 - gamma**horizon + gamma * (1.0 - gamma ** (horizon - 1))) / (1.0 - gamma)
    return PacBudget(
        uniform=uniform,
        optimized=optimized,
        improvement_factor=uniform / optimized,
        condition_holds=8.0 * horizon * epsilon**2 <= log_term * c0,
    )


def brute_force_optimal(
    gamma: float, horizon: int, budget: int, delta: float = 0.1
) -> tuple[np.ndarray, float]:
    """Exact integer optimum by exhaustive enumeration (test oracle).

    Enumerates every positive non-increasing integer allocation that spends
    the budget and returns the one of smallest width together with that
    width.  Guarded to tiny instances; the closed-form path is the production
    route.
    """
    gamma = _check_gamma(gamma)
    horizon = _check_horizon(horizon)
    delta = _check_delta(delta)
    if horizon > BRUTE_FORCE_MAX_HORIZON or budget > BRUTE_FORCE_MAX_BUDGET:
        raise DomainError(
            f"exhaustive search is limited to horizon <= {BRUTE_FORCE_MAX_HORIZON} "
            f"and budget <= {BRUTE_FORCE_MAX_BUDGET}"
        )
    if budget < horizon:
        raise DomainError(f"budget {budget} is below the horizon {horizon}")
    c = coefficients(gamma, horizon)
    best_n: tuple[int, ...] | None = None
    best_score = math.inf

    def descend(prefix: list[int], remaining: int, cap: int) -> None:
        nonlocal best_n, best_score
        steps_left = horizon - len(prefix)
        if steps_left == 0:
            if remaining == 0:
                score = float(np.sum(c / np.array(prefix, dtype=float)))
                if score < best_score:
                    best_score = score
                    best_n = tuple(prefix)
            return
        top = min(cap, remaining - (steps_left - 1))
        for value in range(top, 0, -1):
            if value * steps_left < remaining:
                break  # even repeating this value cannot spend the rest
            descend(prefix + [value], remaining - value, value)

    descend([], budget, budget)
    if best_n is None:
        raise InternalCheckError("exhaustive search found no feasible allocation")
    return np.array(best_n, dtype=np.int64), math.sqrt(
        0.5 * math.log(2.0 / delta) * best_score
    )
