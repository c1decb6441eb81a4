"""Benchmark environments with finite horizons and discrete actions.

All environments are pure: the environment object holds only configuration,
state lives in :class:`EnvState`, and every random draw comes from the
generator passed to :meth:`step`, so independent trajectories can use
independent streams.  Observations are pre-normalized feature vectors
(roughly within ``[-1, 1]``), ready to feed a policy without further scaling.

Environments whose observation is a fixed function of the step index expose
``observation_table`` (shape ``(horizon, observation_dim)``), which lets the
collector evaluate the policy once per step instead of once per transition.

Catalog:

* :func:`milestone_eval` — two actions; at eleven milestone steps the chosen
  action pays a Gaussian reward around an action-specific level, elsewhere
  nothing.  Returns are available in closed form, so estimator bias and
  coverage can be measured against the truth.
* :func:`corridor_sparse` / :func:`corridor_dense` — a noisy 1-d corridor
  walked left/right; the commanded direction is realized only with
  probability ``p_right``.  Sparse pays once on reaching the goal; dense pays
  a per-step reward whose sign follows the realized direction.
* :func:`dam` — daily water release with flooding and demand penalties; each
  decision persists for three simulated days.
* :func:`final_reward_chain` — deterministic advance, a single symmetric
  ±1 reward at the last step; isolates tail-sample effects on the estimator
  variance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .policies import SoftmaxPolicy


@dataclass(frozen=True)
class EnvState:
    """Immutable snapshot of an episode: observation, step index, absorption."""

    observation: np.ndarray
    t: int
    absorbed: bool = False
    internal: tuple = ()


def _step_features(horizon: int) -> np.ndarray:
    """Step index mapped affinely onto [-1, 1], as a (horizon, 1) table."""
    if horizon == 1:
        return np.zeros((1, 1))
    return (2.0 * np.arange(horizon) / (horizon - 1) - 1.0).reshape(-1, 1)


# ---------------------------------------------------------------------------
# milestone evaluation MDP


MILESTONE_LEVELS_A = np.array([1.0, 4.0, 3.0, 1.0, 1.5, 0.4, 4.0, 4.1, 3.0, 2.0, 4.0])
MILESTONE_LEVELS_B = np.array([4.0, 1.0, 1.0, 3.0, 4.0, 1.5, 0.1, 5.0, 1.0, 1.0, 4.0])


class MilestoneEnv:
    """Two-action chain whose rewards appear only at milestone steps.

    The state is the step index itself.  At milestone ``k`` (steps
    ``0, T/10, ..., 9T/10`` and ``T-1``) action ``a`` pays
    ``Normal(levels[a][k], reward_std)``; every other step pays zero.  Since
    dynamics are deterministic and the noise has zero mean, the expected
    discounted return of any policy is a finite sum available from
    :meth:`exact_return`, and the exact estimator variance of a sample
    allocation follows from independence across steps
    (:meth:`exact_estimator_variance`).
    """

    n_actions = 2

    def __init__(self, horizon: int = 100, reward_std: float = 0.1):
        if horizon < 10 or horizon % 10:
            raise DomainError(f"milestone horizon must be a multiple of 10, got {horizon}")
        self.horizon = int(horizon)
        self.reward_std = float(reward_std)
        milestones = list(range(0, horizon, horizon // 10)) + [horizon - 1]
        self.milestone_steps = np.array(sorted(set(milestones)))
        self.observation_dim = 1
        self.observation_table = _step_features(horizon)
        # per-step reward levels; NaN marks silent steps
        self._levels = np.full((2, horizon), np.nan)
        for k, t in enumerate(self.milestone_steps):
            self._levels[0, t] = MILESTONE_LEVELS_A[k]
            self._levels[1, t] = MILESTONE_LEVELS_B[k]
        self._states = [
            EnvState(self.observation_table[t], t) for t in range(horizon)
        ] + [EnvState(self.observation_table[-1], horizon)]

    def reset(self, rng: np.random.Generator) -> EnvState:
        return self._states[0]

    def step(self, state: EnvState, action: int, rng: np.random.Generator):
        level = self._levels[action, state.t]
        if level == level:  # milestone step (not NaN)
            reward = level + self.reward_std * rng.standard_normal()
        else:
            reward = 0.0
        return self._states[state.t + 1], reward

    # -- closed forms --------------------------------------------------------

    def _policy_probs_per_step(self, policy: SoftmaxPolicy) -> np.ndarray:
        return np.array(
            [policy.action_probs(self.observation_table[t]) for t in self.milestone_steps]
        )

    def exact_return(self, policy: SoftmaxPolicy, gamma: float) -> float:
        """Expected discounted return of ``policy``, summed over milestones."""
        if not 0.0 < gamma <= 1.0:
            raise DomainError(f"discount factor must lie in (0, 1], got {gamma!r}")
        probs = self._policy_probs_per_step(policy)
        levels = np.stack(
            [self._levels[0, self.milestone_steps], self._levels[1, self.milestone_steps]],
            axis=1,
        )
        return float(
            np.sum(gamma**self.milestone_steps * np.sum(probs * levels, axis=1))
        )

    def exact_estimator_variance(
        self, policy: SoftmaxPolicy, gamma: float, n: np.ndarray
    ) -> float:
        """Exact variance of the truncated estimator under sample counts ``n``.

        Rewards at distinct (step, trajectory) pairs are independent here, so
        the variance is ``sum_t gamma^(2t) * var_t / n_t`` with ``var_t`` the
        per-step reward variance under the policy.
        """
        if not 0.0 < gamma <= 1.0:
            raise DomainError(f"discount factor must lie in (0, 1], got {gamma!r}")
        n = np.asarray(n, dtype=float)
        if n.shape != (self.horizon,) or np.any(n < 1):
            raise DomainError("sample counts must cover every step")
        probs = self._policy_probs_per_step(policy)
        levels = np.stack(
            [self._levels[0, self.milestone_steps], self._levels[1, self.milestone_steps]],
            axis=1,
        )
        mean = np.sum(probs * levels, axis=1)
        second = np.sum(probs * levels**2, axis=1) + self.reward_std**2
        var = second - mean**2
        return float(
            np.sum(gamma ** (2 * self.milestone_steps) * var / n[self.milestone_steps])
        )


def milestone_eval(horizon: int = 100, reward_std: float = 0.1) -> MilestoneEnv:
    return MilestoneEnv(horizon=horizon, reward_std=reward_std)


def exact_return(env, policy: SoftmaxPolicy, gamma: float) -> float:
    """Closed-form expected return, for environments that support one."""
    fn = getattr(env, "exact_return", None)
    if fn is None:
        raise DomainError(f"{type(env).__name__} has no closed-form return")
    return fn(policy, gamma)


# ---------------------------------------------------------------------------
# corridor


class CorridorEnv:
    """Noisy 1-d corridor with unreliable actuation.

    Action 0 commands a step right (+1), action 1 left (-1); the commanded
    direction is realized with probability ``p_right`` and inverted otherwise,
    plus Gaussian position noise.  Positions are clipped to
    ``[-x_max, x_max]`` and the episode absorbs within 0.5 of the goal: once
    absorbed, state and zero reward persist.

    Sparse mode pays 1 on the transition that reaches the goal and nothing
    else; dense mode pays ±0.2 every non-absorbed step, signed by the
    *realized* direction, so always-right is optimal but each step carries
    signal.
    """

    n_actions = 2
    observation_dim = 1

    def __init__(
        self,
        horizon: int,
        goal: float,
        x_max: float,
        dense: bool,
        p_right: float = 0.9,
        noise_std: float = 0.1,
    ):
        if not 0.0 < p_right <= 1.0:
            raise DomainError(f"actuation probability must lie in (0, 1], got {p_right}")
        self.horizon = int(horizon)
        self.goal = float(goal)
        self.x_max = float(x_max)
        self.dense = bool(dense)
        self.p_right = float(p_right)
        self.noise_std = float(noise_std)

    def _state(self, x: float, t: int) -> EnvState:
        return EnvState(
            np.array([x / self.x_max]),
            t,
            absorbed=abs(x - self.goal) < 0.5,
            internal=(x,),
        )

    def reset(self, rng: np.random.Generator) -> EnvState:
        return self._state(0.0, 0)

    def step(self, state: EnvState, action: int, rng: np.random.Generator):
        if state.absorbed:
            return EnvState(state.observation, state.t + 1, True, state.internal), 0.0
        x = state.internal[0]
        intended = 1.0 if action == 0 else -1.0
        realized = intended if rng.random() < self.p_right else -intended
        x_next = x + realized + self.noise_std * rng.standard_normal()
        x_next = min(max(x_next, -self.x_max), self.x_max)
        nxt = self._state(x_next, state.t + 1)
        if self.dense:
            reward = 0.2 if realized > 0 else -0.2
        else:
            reward = 1.0 if nxt.absorbed else 0.0
        return nxt, reward


def corridor_sparse(p_right: float = 0.9) -> CorridorEnv:
    return CorridorEnv(horizon=100, goal=12.0, x_max=12.0, dense=False, p_right=p_right)


def corridor_dense(p_right: float = 0.9) -> CorridorEnv:
    return CorridorEnv(horizon=1000, goal=1000.0, x_max=1000.0, dense=True, p_right=p_right)


# ---------------------------------------------------------------------------
# dam release


DAM_DEMAND = 10.0
DAM_FLOOD_LEVEL = 300.0
DAM_PENALTY_WEIGHT = 0.5
DAM_REWARD_SCALE = 0.01
DAM_TIME_CENTERS = np.array([60.0, 120.0, 180.0, 240.0, 300.0, 360.0])


def dam_daily_reward(storage: float, release: int) -> float:
    """One day's penalty: flooding above 300 plus squared unmet demand below 10.

    ``0.01 * (-0.5 * max(0, storage - 300) - 0.5 * max(0, 10 - release)^2)``.
    """
    flood = max(0.0, storage - DAM_FLOOD_LEVEL)
    shortfall = max(0.0, DAM_DEMAND - release)
    return DAM_REWARD_SCALE * (
        -DAM_PENALTY_WEIGHT * flood - DAM_PENALTY_WEIGHT * shortfall**2
    )


def dam_inflow_mean(day: int) -> float:
    """Seasonal inflow profile: a clipped-sine wet season peaking near day 210."""
    phase = math.sin(2.0 * math.pi * ((day % 365) - 120.0) / 365.0)
    return 4.0 + 8.0 * max(0.0, phase) ** 2


class DamEnv:
    """Reservoir release control at a three-day decision cadence.

    Each of the 21 actions releases that many units per day for three
    consecutive days (1080 days = 360 decisions per episode).  Storage
    follows ``s' = max(s - release + inflow, 0)`` with noisy seasonal inflow;
    the decision reward is the sum of the three daily penalties.  The
    observation is the normalized storage plus six seasonal features
    ``2 |day_of_year - center| / 360 - 1``.
    """

    n_actions = 21
    observation_dim = 7
    days_per_decision = 3

    def __init__(self, total_days: int = 1080, initial_storage: float = 200.0,
                 inflow_noise_std: float = 2.0):
        if total_days % self.days_per_decision:
            raise DomainError("total days must be a multiple of the decision length")
        self.horizon = total_days // self.days_per_decision
        self.initial_storage = float(initial_storage)
        self.inflow_noise_std = float(inflow_noise_std)

    def _state(self, storage: float, decision: int) -> EnvState:
        day_of_year = (decision * self.days_per_decision) % 365
        obs = np.empty(7)
        obs[0] = 2.0 * (storage - 50.0) / 450.0 - 1.0
        obs[1:] = 2.0 * np.abs(day_of_year - DAM_TIME_CENTERS) / 360.0 - 1.0
        return EnvState(obs, decision, internal=(storage,))

    def reset(self, rng: np.random.Generator) -> EnvState:
        return self._state(self.initial_storage, 0)

    def step(self, state: EnvState, action: int, rng: np.random.Generator):
        storage = state.internal[0]
        day = state.t * self.days_per_decision
        reward = 0.0
        for offset in range(self.days_per_decision):
            reward += dam_daily_reward(storage, action)
            inflow = dam_inflow_mean(day + offset) + self.inflow_noise_std * rng.standard_normal()
            storage = max(storage - action + inflow, 0.0)
        return self._state(storage, state.t + 1), reward


def dam() -> DamEnv:
    return DamEnv()


# ---------------------------------------------------------------------------
# final-reward chain


class ChainEnv:
    """Deterministic advance with a single ±1 coin-flip reward at the last step.

    Actions are accepted but ignored.  The return of any policy is zero in
    expectation and its estimator variance is controlled entirely by the
    number of full-length trajectories.
    """

    n_actions = 2
    observation_dim = 1

    def __init__(self, horizon: int = 10):
        if horizon < 1:
            raise DomainError(f"horizon must be positive, got {horizon}")
        self.horizon = int(horizon)
        self.observation_table = _step_features(horizon)
        self._states = [
            EnvState(self.observation_table[min(t, horizon - 1)], t)
            for t in range(horizon + 1)
        ]

    def reset(self, rng: np.random.Generator) -> EnvState:
        return self._states[0]

    def step(self, state: EnvState, action: int, rng: np.random.Generator):
        reward = 0.0
        if state.t == self.horizon - 1:
            reward = 1.0 if rng.random() < 0.5 else -1.0
        return self._states[state.t + 1], reward

    def exact_return(self, policy: SoftmaxPolicy, gamma: float) -> float:
        """Zero for every policy: the terminal flip is symmetric."""
        if not 0.0 < gamma <= 1.0:
            raise DomainError(f"discount factor must lie in (0, 1], got {gamma!r}")
        return 0.0


def final_reward_chain(horizon: int = 10) -> ChainEnv:
    return ChainEnv(horizon=horizon)


# ---------------------------------------------------------------------------

ENVIRONMENTS = {
    "milestone": milestone_eval,
    "corridor-sparse": corridor_sparse,
    "corridor-dense": corridor_dense,
    "dam": dam,
    "chain": final_reward_chain,
}


def make_env(name: str, **kwargs):
    """Instantiate a catalog environment by name."""
    try:
        factory = ENVIRONMENTS[name]
    except KeyError:
        raise DomainError(
            f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}"
        ) from None
    return factory(**kwargs)
