"""
Online policy optimization with truncated collection: a small corridor run.

Same budget per iteration, two collection strategies.  The 'tt' mode
spreads the budget over trajectory lengths according to the optimal
schedule; 'uniform' spends everything on full-length trajectories.  On the
dense corridor the agent earns +/-0.2 per step for moving toward or away
from the far goal, so the undiscounted return directly counts useful steps.

Run time is about a minute; shrink ITERATIONS for a quicker look.
"""
import numpy as np

from truncmc import OptimConfig, make_env
from truncmc.ttpois import run

ITERATIONS = 12
BUDGET = 3000
HORIZON = 200


def main():
    results = {}
    for mode in ("tt", "uniform"):
        config = OptimConfig(
            gamma=0.99,
            horizon=HORIZON,
            budget=BUDGET,
            mode=mode,
            delta=0.7,
            clip=100.0,
            online_iterations=ITERATIONS,
            offline_iterations=8,
            hidden=(16,),
            eval_episodes=10,
        )
        env = make_env("corridor-dense")
        results[mode] = run(env, config, seed=3)

    print(f"corridor-dense, horizon {HORIZON}, budget {BUDGET}/iteration\n")
    print(f"{'iter':>4} {'tt return':>10} {'uniform return':>15}")
    for it in range(ITERATIONS + 1):
        tt = results["tt"].logs[it].mean_return
        uni = results["uniform"].logs[it].mean_return
        print(f"{it:>4} {tt:>10.2f} {uni:>15.2f}")
    print("\nBoth climb at identical per-iteration cost.  At this short horizon")
    print("the two are comparable; the truncated schedule's edge grows when the")
    print("horizon is long relative to the effective discounting window.")


if __name__ == "__main__":
    main()
