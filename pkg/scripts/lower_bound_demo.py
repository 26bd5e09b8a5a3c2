"""Tracking adversary against several full-information actors.

Prints realised regret next to the floor for each actor, then the halving
construction's Monte Carlo mean against the uniform actor.
"""
import argparse

import numpy as np

from delayed_ftrl import lower_bound as lb


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--K", type=int, default=16)
    p.add_argument("--T", type=int, default=4096)
    p.add_argument("--replications", type=int, default=1000)
    a = p.parse_args(argv)

    ranges = lb.LossRangeSequence.uniform(a.T)
    eta = lb.TrackingAdversary(a.K, ranges).eta
    actors = {
        "exp-weights (matched eta)": lambda: lb.ExpWeightsActor(eta),
        "exp-weights (eta=0.5)": lambda: lb.ExpWeightsActor(0.5),
        "uniform": lambda: lb.UniformActor(a.K),
        "follow-the-leader": lambda: lb.FollowTheLeaderActor(a.K),
    }
    print(f"K={a.K} T={a.T} floor={lb.regret_floor(ranges, a.K):.4f}")
    for name, make in actors.items():
        rep = lb.run_full_info_game(make(), lb.TrackingAdversary(a.K, ranges), a.T, a.K)
        print(f"  {name:28s} regret={rep.regret:10.4f}  {'pass' if rep.passed else 'FAIL'}")

    K = 4
    h = lb.LossRangeSequence.uniform(lb.n_halvings(K))
    seeds = np.random.SeedSequence(0).spawn(a.replications)
    regrets = [lb.run_full_info_game(lb.UniformActor(K), lb.HalvingAdversary(K, h, s), h.T, K).regret
               for s in seeds]
    print(f"halving K={K}: mean regret {np.mean(regrets):.4f} over {a.replications} games "
          f"(floor {lb.regret_floor(h, K):.4f})")


if __name__ == "__main__":
    main()
