"""Largest probability ratio within a delay window across delays and arm counts."""
import argparse

from delayed_ftrl.analysis import drift_check
from delayed_ftrl.checks import run_stochastic


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--T", type=int, default=20_000)
    p.add_argument("--gap", type=float, default=0.2)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--K", type=int, nargs="+", default=[2, 8])
    p.add_argument("--delay", type=int, nargs="+", default=[0, 5, 25, 100])
    a = p.parse_args(argv)

    print("K,d,seed,max_ratio,s,t,arm")
    for K in a.K:
        for d in a.delay:
            for seed in range(a.seeds):
                tr, _ = run_stochastic(K, a.gap, d, a.T, seed, snapshots="window")
                rep = drift_check(tr)
                s, t, arm = tr.drift_witness or ("", "", "")
                print(f"{K},{d},{seed},{tr.drift_max_ratio!r},{s},{t},{arm}")
                if not rep.passed:
                    print(f"# ratio above 2 for K={K} d={d} seed={seed}")


if __name__ == "__main__":
    main()
