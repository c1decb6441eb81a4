"""Estimator values, importance weighting, and interval constructions."""
import numpy as np
import pytest

from truncmc.batches import Trajectory, TruncatedBatch, collect_batch
from truncmc.envs import milestone_eval
from truncmc.errors import AbsoluteContinuityError, DomainError
from truncmc.estimators import (
    EstimateReport,
    empirical_renyi_profile,
    estimate_return,
    evaluate_off_policy,
    evaluate_on_policy,
    hoeffding_interval,
    importance_weights,
    off_policy_estimate,
    variance_penalty,
    weighted_estimate,
)
from truncmc.policies import SoftmaxPolicy
from truncmc.schedule import (
    Schedule,
    coefficients,
    confidence_width,
    uniform_schedule,
)


def hand_trajectory(rewards, obs_value=0.0, action=0, behavior_prob=0.5):
    h = len(rewards)
    return Trajectory(
        np.full((h, 1), obs_value),
        np.full(h, action, dtype=np.int64),
        np.asarray(rewards, dtype=float),
        np.full(h, np.log(behavior_prob)),
    )


def hand_batch(reward_lists, gamma=None, **traj_kwargs):
    by_len = {}
    for rewards in reward_lists:
        by_len.setdefault(len(rewards), []).append(rewards)
    horizon = max(by_len)
    m = [len(by_len.get(h, ())) for h in range(1, horizon + 1)]
    budget = sum(len(r) for r in reward_lists)
    schedule = Schedule.from_lengths(m, budget=budget, gamma=gamma)
    groups = tuple(
        tuple(hand_trajectory(r, **traj_kwargs) for r in by_len.get(h, ()))
        for h in range(1, horizon + 1)
    )
    return TruncatedBatch(schedule, groups)


def random_conforming_batch(rng, horizon, rewards="random"):
    m = rng.integers(0, 3, size=horizon)
    m[-1] = max(m[-1], 1)
    budget = int(np.sum(m * np.arange(1, horizon + 1)))
    schedule = Schedule.from_lengths(m, budget=budget)
    groups = tuple(
        tuple(
            hand_trajectory(
                np.ones(h) if rewards == "ones" else rng.normal(size=h)
            )
            for _ in range(m[h - 1])
        )
        for h in range(1, horizon + 1)
    )
    return TruncatedBatch(schedule, groups)


class TestEstimateValue:
    def test_hand_example(self):
        # n = (2, 1); undiscounted: 1.0/2 + 0.6/2 + 0.6/1 = 1.4
        batch = hand_batch([[1.0], [0.6, 0.6]])
        assert estimate_return(batch, gamma=1.0) == pytest.approx(1.4)

    def test_hand_example_discounted(self):
        batch = hand_batch([[1.0], [0.6, 0.6]])
        # (1, 0.5)/n = (0.5, 0.5): 0.5*1 + 0.5*0.6 + 0.5*0.6
        assert estimate_return(batch, gamma=0.5) == pytest.approx(1.1)

    @pytest.mark.parametrize("gamma", [0.3, 0.9, 0.999])
    def test_constant_rewards_recover_geometric_sum(self, gamma):
        rng = np.random.default_rng(5)
        for _ in range(10):
            batch = random_conforming_batch(rng, horizon=12, rewards="ones")
            expected = (1 - gamma**12) / (1 - gamma)
            assert estimate_return(batch, gamma) == pytest.approx(expected, rel=1e-12)

    def test_gamma_resolution(self):
        batch = hand_batch([[1.0], [0.6, 0.6]], gamma=0.5)
        assert estimate_return(batch) == pytest.approx(1.1)
        assert estimate_return(batch, gamma=0.5) == pytest.approx(1.1)
        with pytest.raises(DomainError):
            estimate_return(batch, gamma=0.9)

    def test_missing_gamma(self):
        batch = hand_batch([[1.0], [0.6, 0.6]])
        with pytest.raises(DomainError):
            estimate_return(batch)

    def test_weight_shape_checked(self):
        batch = hand_batch([[1.0], [0.6, 0.6]])
        with pytest.raises(DomainError):
            weighted_estimate(batch, np.ones(3), gamma=0.5)


class TestImportanceWeighting:
    def test_hand_ratio(self):
        # behavior stored 0.25 per step, uniform target gives 0.5: ratio 2 per
        # step, 4 for the two-step trajectory
        batch = hand_batch([[1.0, 1.0]], behavior_prob=0.25)
        target = SoftmaxPolicy(1, 2)
        w = importance_weights(batch, target)
        assert w == pytest.approx([4.0])
        assert off_policy_estimate(batch, target, gamma=1.0) == pytest.approx(8.0)

    def test_clip_applies_after_exponentiation(self):
        batch = hand_batch([[1.0, 1.0]], behavior_prob=0.25)
        target = SoftmaxPolicy(1, 2)
        assert importance_weights(batch, target, clip=2.0) == pytest.approx([2.0])
        assert importance_weights(batch, target, clip=10.0) == pytest.approx([4.0])
        with pytest.raises(DomainError):
            importance_weights(batch, target, clip=0.0)

    def test_zero_probability_action_rejected(self):
        class Deterministic:
            @staticmethod
            def action_probs(obs):
                return np.array([1.0, 0.0])

        batch = hand_batch([[1.0, 1.0]], action=1)
        with pytest.raises(AbsoluteContinuityError):
            importance_weights(batch, Deterministic())

    def test_on_policy_is_unit_weight_case_bitwise(self):
        env = milestone_eval()
        policy = SoftmaxPolicy.init_normc(1, 2, rng=np.random.default_rng(8))
        schedule = uniform_schedule(100, 730, gamma=0.95)
        batch = collect_batch(env, policy, schedule, seed=3)
        w = importance_weights(batch, policy)
        assert np.all(w == 1.0)
        assert off_policy_estimate(batch, policy) == estimate_return(batch)

    def test_weights_respond_to_target_shift(self):
        env = milestone_eval()
        behavior = SoftmaxPolicy(1, 2)
        target = SoftmaxPolicy(1, 2, params=np.array([0.0, 0.0, 1.0, -1.0]))
        batch = collect_batch(env, behavior, uniform_schedule(100, 500), seed=1)
        w = importance_weights(batch, target)
        assert w.min() > 0.0
        assert w.max() > 10 * w.min()  # ratios spread across trajectories
        assert not np.any(w == 1.0)


class TestRenyiProfile:
    def test_identical_policies_give_unit_profile(self):
        env = milestone_eval()
        policy = SoftmaxPolicy.init_normc(1, 2, rng=np.random.default_rng(0))
        batch = collect_batch(env, policy, uniform_schedule(100, 400), seed=2)
        profile = empirical_renyi_profile(batch, policy, policy)
        np.testing.assert_allclose(profile, np.ones(100), rtol=1e-12)

    def test_hand_profile_powers(self):
        # target (0.6, 0.4) vs uniform behavior: per-state moment 1.04, so a
        # length-h product is 1.04^h at every length
        batch = hand_batch([[0.0], [0.0, 0.0]])
        target = SoftmaxPolicy(1, 2, params=np.array([0.0, 0.0, np.log(1.5), 0.0]))
        behavior = SoftmaxPolicy(1, 2)
        profile = empirical_renyi_profile(batch, target, behavior)
        np.testing.assert_allclose(profile, [1.04, 1.04**2], rtol=1e-12)

    def test_profile_never_below_one(self):
        env = milestone_eval()
        behavior = SoftmaxPolicy.init_normc(1, 2, rng=np.random.default_rng(4))
        target = SoftmaxPolicy.init_normc(1, 2, rng=np.random.default_rng(5))
        batch = collect_batch(env, behavior, uniform_schedule(100, 600), seed=9)
        profile = empirical_renyi_profile(batch, target, behavior)
        assert np.all(profile >= 1.0 - 1e-12)


class TestWidthIdentity:
    def test_per_length_decomposition_matches_coefficients(self):
        # sum_h m_h (sum_{t<h} gamma^t / n_t)^2 telescopes to sum_t c_t / n_t
        rng = np.random.default_rng(12)
        for _ in range(50):
            horizon = int(rng.integers(2, 30))
            gamma = float(rng.uniform(0.2, 0.999))
            batch_m = rng.integers(0, 4, size=horizon)
            batch_m[-1] = max(batch_m[-1], 1)
            schedule = Schedule.from_lengths(
                batch_m, budget=int(np.sum(batch_m * np.arange(1, horizon + 1)))
            )
            prefix = np.cumsum(gamma ** np.arange(horizon) / schedule.n)
            lhs = float(np.sum(schedule.m * prefix**2))
            rhs = float(np.sum(coefficients(gamma, horizon) / schedule.n))
            assert lhs == pytest.approx(rhs, rel=1e-10)


class TestIntervals:
    def test_hoeffding_width_matches_profile(self):
        schedule = uniform_schedule(10, 50, gamma=0.9)
        lo, hi = hoeffding_interval(3.0, schedule, delta=0.1)
        coeffs = coefficients(0.9, 10)
        half = confidence_width(schedule.n, coeffs, 0.1)
        assert (lo, hi) == pytest.approx((3.0 - half, 3.0 + half))

    def test_reward_range_scales_width(self):
        schedule = uniform_schedule(10, 50, gamma=0.9)
        lo1, hi1 = hoeffding_interval(0.0, schedule, delta=0.1, reward_range=1.0)
        lo2, hi2 = hoeffding_interval(0.0, schedule, delta=0.1, reward_range=10.1)
        assert hi2 == pytest.approx(10.1 * hi1)
        with pytest.raises(DomainError):
            hoeffding_interval(0.0, schedule, delta=0.1, reward_range=0.0)

    def test_doubling_budget_shrinks_width_by_sqrt2(self):
        a = uniform_schedule(10, 50, gamma=0.9)
        b = uniform_schedule(10, 100, gamma=0.9)
        _, hi_a = hoeffding_interval(0.0, a, delta=0.1)
        _, hi_b = hoeffding_interval(0.0, b, delta=0.1)
        assert hi_a / hi_b == pytest.approx(np.sqrt(2))

    def test_tight_penalty_uniform_closed_form(self):
        gamma, horizon, budget, delta, r_max = 0.9, 10, 50, 0.2, 2.0
        schedule = uniform_schedule(horizon, budget, gamma=gamma)
        renyi = np.full(horizon, 1.3)
        tight = variance_penalty(schedule, delta, renyi, r_max)
        phi = r_max * (1 - gamma**horizon) / (1 - gamma)
        beta = (1 - delta) / delta
        expected = phi * np.sqrt(horizon * beta * 1.3 / budget)
        assert tight == pytest.approx(expected, rel=1e-12)

    def test_loose_dominates_tight_for_monotone_profiles(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            horizon = int(rng.integers(2, 20))
            m = rng.integers(0, 3, size=horizon)
            m[-1] = max(m[-1], 1)
            schedule = Schedule.from_lengths(
                m, budget=int(np.sum(m * np.arange(1, horizon + 1)))
            )
            profile = np.cumprod(1 + rng.uniform(0, 0.2, size=horizon))
            gamma = float(rng.uniform(0.3, 0.99))
            tight = variance_penalty(schedule, 0.2, profile, 1.0, gamma)
            loose = variance_penalty(schedule, 0.2, profile, 1.0, gamma, loose=True)
            assert tight <= loose * (1 + 1e-12)

    def test_penalty_input_checks(self):
        schedule = uniform_schedule(5, 20, gamma=0.9)
        with pytest.raises(DomainError):
            variance_penalty(schedule, 0.2, np.ones(4), 1.0)
        with pytest.raises(DomainError):
            variance_penalty(schedule, 0.2, np.ones(5), -1.0)
        with pytest.raises(DomainError):
            variance_penalty(schedule, 1.0, np.ones(5), 1.0)


class TestReports:
    def test_on_policy_report_coverage_smoke(self):
        env = milestone_eval(horizon=10)
        policy = SoftmaxPolicy(1, 2)
        gamma = 0.9
        truth = env.exact_return(policy, gamma)
        schedule = uniform_schedule(10, 30, gamma=gamma)
        hits = 0
        for rep in range(100):
            batch = collect_batch(env, policy, schedule, seed=1000 + rep)
            report = evaluate_on_policy(batch, delta=0.1, reward_range=2 * 5.05)
            assert report.method == "on-policy-hoeffding"
            assert report.half_width > 0
            hits += report.low <= truth <= report.high
        assert hits >= 90

    def test_off_policy_report_fields(self):
        env = milestone_eval(horizon=10)
        behavior = SoftmaxPolicy(1, 2)
        target = SoftmaxPolicy(1, 2, params=np.array([0.0, 0.0, 0.3, -0.3]))
        batch = collect_batch(env, behavior, uniform_schedule(10, 40, gamma=0.9), seed=7)
        report = evaluate_off_policy(
            batch, target, behavior, delta=0.2, r_max=5.05, clip=100.0
        )
        assert report.method == "off-policy-tight"
        assert report.renyi_final >= 1.0
        assert report.low < report.value < report.high
        assert report.clip == 100.0
        loose = evaluate_off_policy(
            batch, target, behavior, delta=0.2, r_max=5.05, loose=True
        )
        assert loose.half_width >= report.half_width
        assert loose.value == report.value
