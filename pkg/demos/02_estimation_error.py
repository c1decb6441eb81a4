"""
Mean squared error of the truncated estimator on the milestone chain.

The milestone environment admits a closed-form expected return, so the
squared error of every estimate is measurable exactly.  We compare the
optimal schedule against uniform full-length collection over a budget
sweep; both estimators are unbiased, so the MSE gap is purely a variance
gap.  The exact estimator variance is printed alongside as a cross-check.
"""
import numpy as np

from truncmc import (
    SoftmaxPolicy,
    collect_batch,
    estimate_return,
    make_env,
    optimal_schedule,
    uniform_schedule,
)
from truncmc.envs import exact_return
from truncmc.seeding import child_seed

GAMMA = 0.95
REPEATS = 40
SEED = 11


def empirical_mse(env, policy, schedule, truth, code):
    errs = np.empty(REPEATS)
    for rep in range(REPEATS):
        batch = collect_batch(env, policy, schedule,
                              child_seed(SEED, "repeat", schedule.budget, code, rep))
        errs[rep] = (estimate_return(batch, GAMMA) - truth) ** 2
    return errs.mean()


def main():
    env = make_env("milestone")
    policy = SoftmaxPolicy(env.observation_dim, env.n_actions)  # uniform actions
    truth = exact_return(env, policy, GAMMA)
    print(f"milestone: T={env.horizon}, exact return {truth:.4f}, {REPEATS} repeats\n")
    print(f"{'budget':>8} {'mse(optimal)':>13} {'mse(uniform)':>13} "
          f"{'exact var opt':>14} {'exact var uni':>14}")
    for budget in (500, 1000, 2000, 5000):
        opt = optimal_schedule(GAMMA, env.horizon, budget)
        uni = uniform_schedule(env.horizon, budget, gamma=GAMMA)
        mse_opt = empirical_mse(env, policy, opt, truth, 0)
        mse_uni = empirical_mse(env, policy, uni, truth, 1)
        var_opt = env.exact_estimator_variance(policy, GAMMA, opt.n)
        var_uni = env.exact_estimator_variance(policy, GAMMA, uni.n)
        print(f"{budget:>8} {mse_opt:>13.4f} {mse_uni:>13.4f} "
              f"{var_opt:>14.4f} {var_uni:>14.4f}")
    print("\nEmpirical MSE tracks the exact variance (unbiased estimator), and")
    print("the optimal schedule multiplies the effective sample count several-fold.")


if __name__ == "__main__":
    main()
