"""Trajectory containers and budget-conforming batch collection.

A batch gathers trajectories of mixed lengths grouped by length: group ``k``
holds exactly ``schedule.m[k]`` trajectories of ``k + 1`` steps, so the whole
batch spends exactly the transition budget.  Each trajectory records
observations, actions, rewards, and the behavior policy's log-probabilities
of the taken actions — everything later needed to re-weight the batch under a
different target policy.

Collection draws every trajectory from its own random stream keyed by
``(length, index)``, so the result is a pure function of
``(env, policy, schedule, seed)`` no matter how many workers share the job.
"""
from __future__ import annotations

import concurrent.futures
import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .policies import SoftmaxPolicy
from .schedule import Schedule
from .seeding import stream

BATCH_FORMAT = "truncated-batch"
BATCH_VERSION = 1


@dataclass(frozen=True)
class Trajectory:
    """One rollout: per-step arrays of equal length."""

    observations: np.ndarray  # (length, obs_dim)
    actions: np.ndarray  # (length,)
    rewards: np.ndarray  # (length,)
    behavior_log_probs: np.ndarray  # (length,)

    def __post_init__(self) -> None:
        h = self.rewards.size
        if h < 1:
            raise DomainError("a trajectory needs at least one step")
        if (
            self.observations.ndim != 2
            or self.observations.shape[0] != h
            or self.actions.shape != (h,)
            or self.behavior_log_probs.shape != (h,)
        ):
            raise DomainError("trajectory arrays disagree on the number of steps")

    @property
    def length(self) -> int:
        return self.rewards.size


@dataclass(frozen=True)
class TruncatedBatch:
    """Trajectories grouped by length, conforming to a schedule.

    ``groups[k]`` holds the trajectories of length ``k + 1``; the group sizes
    reproduce ``schedule.m`` exactly, which is checked on construction.
    """

    schedule: Schedule
    groups: tuple

    def __post_init__(self) -> None:
        m = self.schedule.m
        if len(self.groups) != m.size:
            raise DomainError(
                f"expected {m.size} length groups, got {len(self.groups)}"
            )
        for k, group in enumerate(self.groups):
            if len(group) != m[k]:
                raise DomainError(
                    f"length {k + 1} needs {m[k]} trajectories, got {len(group)}"
                )
            for traj in group:
                if traj.length != k + 1:
                    raise DomainError(
                        f"trajectory of length {traj.length} filed under length {k + 1}"
                    )

    def iter_with_length(self):
        """Yield ``(length, trajectory)`` in ascending length, stable order."""
        for k, group in enumerate(self.groups):
            for traj in group:
                yield k + 1, traj

    @property
    def trajectories(self) -> tuple:
        return tuple(traj for _, traj in self.iter_with_length())

    @property
    def total_steps(self) -> int:
        return sum(h for h, _ in self.iter_with_length())


def rollout(
    env,
    policy: SoftmaxPolicy,
    length: int,
    rng: np.random.Generator,
    prob_rows: np.ndarray | None = None,
) -> Trajectory:
    """Roll ``length`` steps of ``policy`` in ``env`` using draws from ``rng``.

    ``prob_rows`` is an optional per-step action-probability table for
    environments whose observation depends only on the step index; it yields
    the same draws as querying the policy anew each step, just cheaper.
    """
    obs = np.empty((length, env.observation_dim))
    actions = np.empty(length, dtype=np.int64)
    rewards = np.empty(length)
    probs_taken = np.empty(length)
    state = env.reset(rng)
    for t in range(length):
        probs = prob_rows[t] if prob_rows is not None else policy.action_probs(
            state.observation
        )
        a = SoftmaxPolicy.sample_with_probs(probs, rng)
        obs[t] = state.observation
        actions[t] = a
        probs_taken[t] = probs[a]
        state, rewards[t] = env.step(state, a, rng)
    return Trajectory(obs, actions, rewards, np.log(probs_taken))


def _policy_prob_rows(policy: SoftmaxPolicy, table: np.ndarray) -> np.ndarray:
    # row by row through the single-observation path, so the table is
    # bit-identical to what per-step queries would produce
    return np.array([policy.action_probs(row) for row in table])


def _collect_chunk(env, policy, seed, jobs, prob_rows):
    return [
        (h, i, rollout(env, policy, h, stream(seed, "collect", h, i), prob_rows))
        for h, i in jobs
    ]


def collect_batch(
    env,
    policy: SoftmaxPolicy,
    schedule: Schedule,
    seed: int,
    workers: int = 1,
) -> TruncatedBatch:
    """Collect a schedule-conforming batch of truncated trajectories.

    Trajectory ``i`` of length ``h`` always uses the stream keyed by
    ``(h, i)``; with ``workers > 1`` the jobs are split across processes but
    reassembled by key, so the batch is identical for any worker count.
    """
    if schedule.horizon > env.horizon:
        raise DomainError(
            f"schedule horizon {schedule.horizon} exceeds the environment's {env.horizon}"
        )
    if workers < 1:
        raise DomainError(f"worker count must be positive, got {workers}")
    table = getattr(env, "observation_table", None)
    prob_rows = None
    if table is not None:
        prob_rows = _policy_prob_rows(policy, table[: schedule.horizon])

    jobs = [
        (h, i)
        for h in range(1, schedule.horizon + 1)
        for i in range(int(schedule.m[h - 1]))
    ]
    if workers == 1:
        done = _collect_chunk(env, policy, seed, jobs, prob_rows)
    else:
        chunks = [jobs[w::workers] for w in range(workers)]
        done = []
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_collect_chunk, env, policy, seed, chunk, prob_rows)
                for chunk in chunks
                if chunk
            ]
            for fut in futures:
                done.extend(fut.result())

    by_key = {(h, i): traj for h, i, traj in done}
    groups = tuple(
        tuple(by_key[(h, i)] for i in range(int(schedule.m[h - 1])))
        for h in range(1, schedule.horizon + 1)
    )
    return TruncatedBatch(schedule, groups)


# ---------------------------------------------------------------------------
# serialization: one JSON header line, then one JSON record per trajectory


def write_batch(batch: TruncatedBatch, path) -> None:
    """Write a batch as line-oriented JSON (header line, then one per trajectory)."""
    s = batch.schedule
    header = {
        "format": BATCH_FORMAT,
        "version": BATCH_VERSION,
        "m": s.m.tolist(),
        "budget": int(s.budget),
        "horizon": int(s.horizon),
        "gamma": s.gamma,
        "observation_dim": int(
            batch.trajectories[0].observations.shape[1] if batch.trajectories else 0
        ),
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for _, traj in batch.iter_with_length():
            record = {
                "observations": traj.observations.tolist(),
                "actions": traj.actions.tolist(),
                "rewards": traj.rewards.tolist(),
                "behavior_log_probs": traj.behavior_log_probs.tolist(),
            }
            fh.write(json.dumps(record) + "\n")


def read_batch(path) -> TruncatedBatch:
    """Read a batch written by :func:`write_batch` (exact float round trip)."""
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("format") != BATCH_FORMAT:
            raise DomainError(f"not a {BATCH_FORMAT} file: {path}")
        if header.get("version") != BATCH_VERSION:
            raise DomainError(f"unsupported batch version {header.get('version')}")
        schedule = Schedule.from_lengths(
            header["m"], budget=header["budget"], gamma=header["gamma"]
        )
        trajectories = []
        for line in fh:
            rec = json.loads(line)
            trajectories.append(
                Trajectory(
                    np.array(rec["observations"], dtype=float).reshape(
                        len(rec["actions"]), -1
                    ),
                    np.array(rec["actions"], dtype=np.int64),
                    np.array(rec["rewards"], dtype=float),
                    np.array(rec["behavior_log_probs"], dtype=float),
                )
            )
    groups, cursor = [], 0
    for k, count in enumerate(schedule.m):
        group = tuple(trajectories[cursor : cursor + count])
        cursor += count
        groups.append(group)
    if cursor != len(trajectories):
        raise DomainError("trajectory records do not match the header schedule")
    return TruncatedBatch(schedule, tuple(groups))
