#!/usr/bin/env python3
"""Online dynamics learning on the latched-articulation tasks, with and without priors."""

import argparse

from voxplan.dynamics import online_loop, synthesize_priors
from voxplan.sim.tasks import make_task

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--template", default="open_door",
                    choices=["open_door", "open_window", "open_fridge"])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--budget", type=int, default=300)
    args = ap.parse_args()

    for seed in args.seeds:
        task = make_task(args.template, seed=seed)
        priors = synthesize_priors(task, base_seed=seed)
        with_prior = online_loop(task, priors, transition_budget=args.budget, seed=seed)
        without = online_loop(task, None, transition_budget=args.budget, seed=seed)
        print(
            f"seed {seed}: with prior {with_prior.success_rate:.1%} "
            f"({with_prior.transitions} transitions, {with_prior.interaction_seconds:.0f}s sim), "
            f"no prior {without.success_rate:.1%}"
            f"{' TLE' if without.exceeded else ''}"
        )
