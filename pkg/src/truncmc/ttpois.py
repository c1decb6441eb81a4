"""Offline policy optimization over truncated batches.

Each online iteration collects one batch under the current behavior policy
and then climbs a surrogate objective offline: the importance-weighted return
estimate minus a deviation penalty that grows with the mismatch between
target and behavior.  Two modes share all machinery and differ only in how
data is collected and how the penalty treats trajectory lengths:

* ``"tt"`` — collect with the width-optimal truncated schedule and penalize
  per length class: ``sqrt(beta * sum_h m_h * phi_h^2 * renyi_h)`` with
  ``phi_h = r_max * sum_{t<h} gamma^t / n_t``;
* ``"uniform"`` — collect full-length trajectories and use the classical
  full-horizon penalty ``phi * sqrt(T * beta * renyi_T / budget)`` with
  ``phi = r_max (1 - gamma^T) / (1 - gamma)``.

When the budget is divisible by the horizon the uniform schedule is a special
case of the per-length penalty, and the two coincide.

The surrogate gradient is assembled in closed form as one weighted-logit
backprop over every step of every trajectory, so offline iterations cost a
couple of batched passes through the policy network regardless of horizon.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .batches import TruncatedBatch, collect_batch, rollout
from .errors import DomainError
from .policies import SoftmaxPolicy
from .schedule import Schedule, optimal_schedule, uniform_schedule
from .seeding import child_seed, stream

MODES = ("tt", "uniform")


@dataclass(frozen=True)
class OptimConfig:
    """Settings for the online/offline optimization loop."""

    gamma: float
    horizon: int
    budget: int
    mode: str = "tt"
    delta: float = 0.7
    clip: float | None = 100.0
    online_iterations: int = 10
    offline_iterations: int = 10
    step_init: float = 1.0
    step_shrink: float = 0.5
    max_halvings: int = 30
    hidden: tuple = ()
    r_max_floor: float | None = None
    eval_episodes: int = 20

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")
        for name in ("online_iterations", "offline_iterations", "eval_episodes"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be non-negative")


@dataclass(frozen=True)
class IterationLog:
    """One online iteration: surrogate progress and evaluation returns.

    ``iteration`` 0 records the initial policy (no surrogate, no steps);
    evaluation returns are means over fresh rollouts, with the standard error
    of the undiscounted mean alongside.
    """

    iteration: int
    surrogate_start: float
    surrogate_end: float
    accepted_steps: int
    r_max: float
    mean_return: float
    mean_return_se: float
    mean_return_discounted: float


@dataclass(frozen=True)
class OptimResult:
    policy: SoftmaxPolicy
    schedule: Schedule
    config: OptimConfig
    logs: tuple


def effective_r_max(batch: TruncatedBatch, floor: float | None = None) -> float:
    """Largest absolute reward seen in the batch, optionally floored."""
    top = 0.0
    for _, traj in batch.iter_with_length():
        if traj.rewards.size:
            top = max(top, float(np.max(np.abs(traj.rewards))))
    if floor is not None:
        top = max(top, float(floor))
    return top


def collection_schedule(config: OptimConfig) -> Schedule:
    """The batch layout each online iteration uses, per mode."""
    if config.mode == "tt":
        return optimal_schedule(config.gamma, config.horizon, config.budget)
    return uniform_schedule(config.horizon, config.budget, gamma=config.gamma)


# ---------------------------------------------------------------------------
# stacked batch views


class _StackedBatch:
    """All steps of a batch flattened into row-parallel arrays."""

    def __init__(self, batch: TruncatedBatch):
        schedule = batch.schedule
        trajs = [traj for _, traj in batch.iter_with_length()]
        self.schedule = schedule
        self.lengths = np.array([traj.length for traj in trajs], dtype=np.int64)
        self.offsets = np.concatenate(([0], np.cumsum(self.lengths)[:-1]))
        self.ends = self.offsets + self.lengths - 1
        self.xs = np.concatenate([traj.observations for traj in trajs])
        self.actions = np.concatenate([traj.actions for traj in trajs])
        self.rewards = np.concatenate([traj.rewards for traj in trajs])
        self.behavior_logp = np.concatenate([traj.behavior_log_probs for traj in trajs])
        self.t = np.concatenate([np.arange(traj.length) for traj in trajs])
        self.traj_of_row = np.repeat(np.arange(len(trajs)), self.lengths)

    def segment_sums(self, values: np.ndarray) -> np.ndarray:
        return np.add.reduceat(values, self.offsets)

    def segment_suffix_sums(self, values: np.ndarray) -> np.ndarray:
        """Inclusive suffix sums within each trajectory's rows."""
        cs = np.cumsum(values)
        seg_totals = cs[self.ends]
        return np.repeat(seg_totals, self.lengths) - cs + values

    def segment_prefix_sums(self, values: np.ndarray) -> np.ndarray:
        """Inclusive prefix sums within each trajectory's rows."""
        cs = np.cumsum(values)
        base = cs[self.offsets] - values[self.offsets]
        return cs - np.repeat(base, self.lengths)


def _penalty_scale(stacked: _StackedBatch, gamma: float, r_max: float, mode: str,
                   delta: float):
    """Per-length penalty coefficients C_h (index h-1) and the beta factor."""
    schedule = stacked.schedule
    horizon = schedule.horizon
    beta = (1.0 - delta) / delta
    if mode == "tt":
        phi = r_max * np.cumsum(gamma ** np.arange(horizon) / schedule.n)
        return beta * schedule.m * phi**2
    coeff = np.zeros(horizon)
    phi = r_max * (1.0 - gamma**horizon) / (1.0 - gamma) if gamma < 1.0 else r_max * horizon
    coeff[-1] = beta * phi**2 * horizon / schedule.budget
    return coeff


def _surrogate_parts(
    stacked: _StackedBatch,
    target: SoftmaxPolicy,
    behavior: SoftmaxPolicy,
    config: OptimConfig,
    r_max: float,
):
    """Everything the surrogate value and gradient share.

    Returns the target/behavior probability rows, per-trajectory clipped
    weights and return terms, per-row ratio second moments with their running
    products, and the penalty value ``sqrt(S)``.
    """
    schedule = stacked.schedule
    gamma = config.gamma
    probs, cache = target.forward_batch(stacked.xs)
    q_probs = behavior.action_probs_batch(stacked.xs)

    rows = np.arange(stacked.actions.size)
    log_ratio_rows = np.log(probs[rows, stacked.actions]) - stacked.behavior_logp
    log_w = stacked.segment_sums(log_ratio_rows)
    with np.errstate(over="ignore"):
        w_raw = np.exp(log_w)
    if config.clip is not None:
        clipped = w_raw > config.clip
        w = np.where(clipped, config.clip, w_raw)
    else:
        clipped = np.zeros_like(w_raw, dtype=bool)
        w = w_raw

    disc = gamma ** np.arange(schedule.horizon) / schedule.n
    terms = stacked.segment_sums(disc[stacked.t] * stacked.rewards)
    estimate = float(np.sum(w * terms))

    # per-row ratio second moments and their within-trajectory products
    d_rows = np.sum(probs**2 / q_probs, axis=1)
    log_pp = stacked.segment_prefix_sums(np.log(d_rows))
    with np.errstate(over="ignore"):
        pp_rows = np.exp(log_pp)

    coeff = _penalty_scale(stacked, gamma, r_max, config.mode, config.delta)
    # d-hat profile: average running product over trajectories reaching each step.
    # overflow here saturates to inf on purpose — an infinite penalty marks a
    # proposal the line search must reject — so the warning is suppressed
    profile_sums = np.zeros(schedule.horizon)
    with np.errstate(over="ignore"):
        np.add.at(profile_sums, stacked.t, pp_rows)
        # sum only where the scale is nonzero: a saturated (infinite) product at
        # a zero-coefficient length must not poison the total with 0 * inf
        nz = coeff > 0
        s_value = float(np.sum(coeff[nz] * profile_sums[nz] / schedule.n[nz]))
    penalty = math.sqrt(s_value) if s_value > 0 else 0.0

    return {
        "probs": probs,
        "cache": cache,
        "q_probs": q_probs,
        "w": w,
        "clipped": clipped,
        "terms": terms,
        "d_rows": d_rows,
        "pp_rows": pp_rows,
        "coeff": coeff,
        "estimate": estimate,
        "s_value": s_value,
        "penalty": penalty,
    }


def surrogate(
    batch: TruncatedBatch,
    target: SoftmaxPolicy,
    behavior: SoftmaxPolicy,
    config: OptimConfig,
    r_max: float,
) -> float:
    """Importance-weighted estimate minus the deviation penalty."""
    stacked = batch if isinstance(batch, _StackedBatch) else _StackedBatch(batch)
    parts = _surrogate_parts(stacked, target, behavior, config, r_max)
    return parts["estimate"] - parts["penalty"]


def surrogate_gradient(
    batch: TruncatedBatch,
    target: SoftmaxPolicy,
    behavior: SoftmaxPolicy,
    config: OptimConfig,
    r_max: float,
) -> np.ndarray:
    """Exact gradient of :func:`surrogate` in the target's parameters.

    Both terms reduce to one weighted-logit backprop: the estimate term
    contributes score weights ``w_i * G_i * (onehot - probs)`` on unclipped
    trajectories, the penalty term contributes ``A * 2 p (p / q - d)`` where
    ``A`` folds the chain rule through each running ratio product.
    """
    stacked = batch if isinstance(batch, _StackedBatch) else _StackedBatch(batch)
    parts = _surrogate_parts(stacked, target, behavior, config, r_max)
    probs = parts["probs"]
    schedule = stacked.schedule

    u = np.where(parts["clipped"], 0.0, parts["w"]) * parts["terms"]
    weights = -(u[stacked.traj_of_row, None]) * probs
    rows = np.arange(stacked.actions.size)
    weights[rows, stacked.actions] += u[stacked.traj_of_row]

    if 0 < parts["s_value"] < math.inf:
        coeff_rows = parts["coeff"][stacked.t] / schedule.n[stacked.t]
        contrib = np.zeros_like(parts["pp_rows"])
        nz = coeff_rows > 0
        contrib[nz] = coeff_rows[nz] * parts["pp_rows"][nz]
        suffix = stacked.segment_suffix_sums(contrib)
        a_rows = suffix / (2.0 * parts["penalty"] * parts["d_rows"])
        q_probs = parts["q_probs"]
        d_col = parts["d_rows"][:, None]
        weights -= a_rows[:, None] * 2.0 * probs * (probs / q_probs - d_col)

    return target._backward_cached(parts["cache"], weights)


def line_search(
    objective,
    theta: np.ndarray,
    direction: np.ndarray,
    baseline: float,
    step_init: float = 1.0,
    step_shrink: float = 0.5,
    max_halvings: int = 30,
):
    """First strictly improving point along ``direction``, halving the step.

    Returns ``(point, value, step)``; a zero step means no candidate beat the
    baseline (non-finite objective values are rejected like any other miss).
    """
    step = step_init
    for _ in range(max_halvings + 1):
        candidate = theta + step * direction
        value = objective(candidate)
        if np.isfinite(value) and value > baseline:
            return candidate, float(value), step
        step *= step_shrink
    return theta, float(baseline), 0.0


def improve_offline(
    batch: TruncatedBatch,
    behavior: SoftmaxPolicy,
    config: OptimConfig,
    r_max: float,
):
    """Climb the surrogate from the behavior policy on one fixed batch.

    Returns ``(policy, start_value, end_value, accepted_steps)``.
    """
    stacked = _StackedBatch(batch)

    def objective(params):
        return surrogate(stacked, behavior.with_params(params), behavior, config, r_max)

    theta = behavior.params.copy()
    value = objective(theta)
    start = value
    accepted = 0
    for _ in range(config.offline_iterations):
        grad = surrogate_gradient(
            stacked, behavior.with_params(theta), behavior, config, r_max
        )
        theta, value, step = line_search(
            objective,
            theta,
            grad,
            baseline=value,
            step_init=config.step_init,
            step_shrink=config.step_shrink,
            max_halvings=config.max_halvings,
        )
        if step == 0.0:
            break
        accepted += 1
    return behavior.with_params(theta), float(start), float(value), accepted


def evaluate_policy(env, policy: SoftmaxPolicy, episodes: int, gamma: float,
                    seed: int, tag: int):
    """Mean undiscounted and discounted return over fresh full-length rollouts."""
    horizon = env.horizon
    disc = gamma ** np.arange(horizon)
    plain = np.empty(episodes)
    discounted = np.empty(episodes)
    for ep in range(episodes):
        traj = rollout(env, policy, horizon, stream(seed, "eval", tag, ep))
        plain[ep] = traj.rewards.sum()
        discounted[ep] = disc @ traj.rewards
    se = float(plain.std(ddof=1) / math.sqrt(episodes)) if episodes > 1 else 0.0
    return float(plain.mean()), se, float(discounted.mean())


def run(env, config: OptimConfig, seed: int,
        policy: SoftmaxPolicy | None = None) -> OptimResult:
    """Online loop: collect, improve offline, redeploy; log each iteration."""
    if policy is None:
        policy = SoftmaxPolicy.init_normc(
            env.observation_dim, env.n_actions, config.hidden,
            rng=stream(seed, "init"),
        )
    schedule = collection_schedule(config)
    logs = []
    mean, se, mean_disc = evaluate_policy(
        env, policy, config.eval_episodes, config.gamma, seed, 0
    )
    logs.append(
        IterationLog(0, math.nan, math.nan, 0, math.nan, mean, se, mean_disc)
    )
    for it in range(1, config.online_iterations + 1):
        batch = collect_batch(env, policy, schedule, seed=child_seed(seed, "iter", it))
        r_max = effective_r_max(batch, config.r_max_floor)
        policy, start, end, accepted = improve_offline(batch, policy, config, r_max)
        mean, se, mean_disc = evaluate_policy(
            env, policy, config.eval_episodes, config.gamma, seed, it
        )
        logs.append(IterationLog(it, start, end, accepted, r_max, mean, se, mean_disc))
    return OptimResult(policy=policy, schedule=schedule, config=config, logs=tuple(logs))
