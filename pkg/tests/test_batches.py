"""Batch collection: conformance, reproducibility, serialization."""
import numpy as np
import pytest

from truncmc.batches import (
    Trajectory,
    TruncatedBatch,
    collect_batch,
    read_batch,
    rollout,
    write_batch,
)
from truncmc.envs import corridor_sparse, final_reward_chain, milestone_eval
from truncmc.errors import DomainError
from truncmc.policies import SoftmaxPolicy
from truncmc.schedule import Schedule, uniform_schedule
from truncmc.seeding import stream


def batches_equal(a, b):
    if not np.array_equal(a.schedule.m, b.schedule.m):
        return False
    for (ha, ta), (hb, tb) in zip(a.iter_with_length(), b.iter_with_length()):
        if ha != hb:
            return False
        for field in ("observations", "actions", "rewards", "behavior_log_probs"):
            if not np.array_equal(getattr(ta, field), getattr(tb, field)):
                return False
    return True


class TestStreams:
    def test_same_key_same_draws(self):
        a = stream(42, "collect", 3, 1).random(4)
        b = stream(42, "collect", 3, 1).random(4)
        np.testing.assert_array_equal(a, b)

    def test_distinct_keys_distinct_draws(self):
        base = stream(42, "collect", 3, 1).random(4)
        assert not np.array_equal(base, stream(42, "collect", 3, 2).random(4))
        assert not np.array_equal(base, stream(42, "eval", 3, 1).random(4))
        assert not np.array_equal(base, stream(43, "collect", 3, 1).random(4))

    def test_unknown_purpose(self):
        with pytest.raises(DomainError):
            stream(0, "shuffle", 1)


class TestCollection:
    def test_conforms_to_schedule(self):
        env = milestone_eval()
        schedule = Schedule.from_lengths([2] + [0] * 97 + [1, 3], budget=2 + 99 + 300)
        batch = collect_batch(env, SoftmaxPolicy(1, 2), schedule, seed=7)
        assert [len(g) for g in batch.groups] == schedule.m.tolist()
        for h, traj in batch.iter_with_length():
            assert traj.length == h
        assert batch.total_steps == schedule.budget

    def test_deterministic_in_seed(self):
        env = corridor_sparse()
        schedule = uniform_schedule(100, 700)
        policy = SoftmaxPolicy.init_normc(1, 2, rng=np.random.default_rng(0))
        a = collect_batch(env, policy, schedule, seed=11)
        b = collect_batch(env, policy, schedule, seed=11)
        c = collect_batch(env, policy, schedule, seed=12)
        assert batches_equal(a, b)
        assert not batches_equal(a, c)

    def test_stream_keyed_by_length_and_index(self):
        # the same (length, index) slot sees the same draws even when the
        # rest of the schedule changes
        env = milestone_eval(horizon=10)
        policy = SoftmaxPolicy(1, 2)
        small = Schedule.from_lengths([0] * 9 + [1], budget=10)
        large = Schedule.from_lengths([2, 0, 0, 0, 1, 0, 0, 0, 0, 2], budget=27)
        t_small = collect_batch(env, policy, small, seed=5).groups[9][0]
        t_large = collect_batch(env, policy, large, seed=5).groups[9][0]
        np.testing.assert_array_equal(t_small.rewards, t_large.rewards)
        np.testing.assert_array_equal(t_small.actions, t_large.actions)

    def test_worker_count_does_not_change_results(self):
        env = milestone_eval(horizon=10)
        schedule = Schedule.from_lengths([3, 2, 0, 0, 1, 0, 0, 0, 0, 2], budget=32)
        policy = SoftmaxPolicy.init_normc(1, 2, rng=np.random.default_rng(3))
        serial = collect_batch(env, policy, schedule, seed=9, workers=1)
        parallel = collect_batch(env, policy, schedule, seed=9, workers=3)
        assert batches_equal(serial, parallel)

    def test_observation_table_path_matches_generic_path(self):
        env = milestone_eval(horizon=10)

        class Opaque:
            # same dynamics, but hides the step-indexed observation table
            n_actions = env.n_actions
            observation_dim = env.observation_dim
            horizon = env.horizon
            reset = staticmethod(env.reset)
            step = staticmethod(env.step)

        schedule = Schedule.from_lengths([1, 1, 0, 0, 2, 0, 0, 0, 0, 1], budget=23)
        policy = SoftmaxPolicy.init_normc(1, 2, rng=np.random.default_rng(1))
        fast = collect_batch(env, policy, schedule, seed=4)
        slow = collect_batch(Opaque(), policy, schedule, seed=4)
        assert batches_equal(fast, slow)

    def test_behavior_log_probs_match_policy(self):
        env = corridor_sparse()
        policy = SoftmaxPolicy.init_normc(1, 2, rng=np.random.default_rng(2))
        batch = collect_batch(env, policy, uniform_schedule(100, 300), seed=13)
        for _, traj in batch.iter_with_length():
            for t in range(traj.length):
                expected = policy.action_probs(traj.observations[t])[traj.actions[t]]
                assert np.exp(traj.behavior_log_probs[t]) == pytest.approx(
                    expected, rel=1e-12
                )

    def test_horizon_mismatch_rejected(self):
        env = milestone_eval(horizon=10)
        with pytest.raises(DomainError):
            collect_batch(env, SoftmaxPolicy(1, 2), uniform_schedule(20, 40), seed=0)

    def test_bad_worker_count(self):
        env = milestone_eval(horizon=10)
        with pytest.raises(DomainError):
            collect_batch(env, SoftmaxPolicy(1, 2), uniform_schedule(10, 20), seed=0, workers=0)

    def test_rollout_shapes(self):
        env = final_reward_chain(horizon=6)
        traj = rollout(env, SoftmaxPolicy(1, 2), 6, np.random.default_rng(0))
        assert traj.observations.shape == (6, 1)
        assert traj.rewards.shape == (6,)
        assert traj.rewards[-1] in (-1.0, 1.0)


class TestContainers:
    def _traj(self, h):
        return Trajectory(
            np.zeros((h, 1)), np.zeros(h, dtype=np.int64), np.zeros(h), np.zeros(h)
        )

    def test_group_count_checked(self):
        schedule = Schedule.from_lengths([1, 1], budget=3)
        with pytest.raises(DomainError):
            TruncatedBatch(schedule, ((self._traj(1),),))

    def test_group_size_checked(self):
        schedule = Schedule.from_lengths([1, 1], budget=3)
        with pytest.raises(DomainError):
            TruncatedBatch(schedule, ((self._traj(1), self._traj(1)), (self._traj(2),)))

    def test_misfiled_length_checked(self):
        schedule = Schedule.from_lengths([1, 1], budget=3)
        with pytest.raises(DomainError):
            TruncatedBatch(schedule, ((self._traj(2),), (self._traj(2),)))

    def test_trajectory_array_mismatch(self):
        with pytest.raises(DomainError):
            Trajectory(np.zeros((3, 1)), np.zeros(2, dtype=np.int64), np.zeros(3), np.zeros(3))
        with pytest.raises(DomainError):
            Trajectory(np.zeros((0, 1)), np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0))


class TestSerialization:
    def test_round_trip_bitwise(self, tmp_path):
        env = corridor_sparse()
        policy = SoftmaxPolicy.init_normc(1, 2, rng=np.random.default_rng(6))
        schedule = Schedule.from_lengths(
            [2] + [0] * 48 + [1] + [0] * 49 + [1], budget=2 + 50 + 100, gamma=0.99
        )
        batch = collect_batch(env, policy, schedule, seed=21)
        path = tmp_path / "batch.jsonl"
        write_batch(batch, path)
        loaded = read_batch(path)
        assert batches_equal(batch, loaded)
        assert loaded.schedule.gamma == 0.99
        assert loaded.schedule.budget == batch.schedule.budget

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "other.jsonl"
        path.write_text('{"format": "something-else", "version": 1}\n')
        with pytest.raises(DomainError):
            read_batch(path)
