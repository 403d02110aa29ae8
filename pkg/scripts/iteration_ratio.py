"""Simulated mean iteration time, non-blocking over blocking, against 1/(P H_P)."""

import argparse

from nbsgd import recipes
from nbsgd.experiment import run_experiment
from nbsgd.runtime import iteration_time_ratio


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--P", type=int, nargs="+", default=[2, 4, 8])
    ap.add_argument("--K", type=int, default=10_000)
    args = ap.parse_args()
    print("P,simulated,closed_form,rel_dev")
    for P in args.P:
        t = {m: run_experiment(recipes.exponential_batches(m, args.K, P=P)).records[-1].sim_time
             for m in ("nonblocking", "blocking")}
        sim = t["nonblocking"] / t["blocking"]
        exact = iteration_time_ratio(1.0, P)
        print(f"{P},{sim:.5f},{exact:.5f},{sim / exact - 1:+.3%}")


if __name__ == "__main__":
    main()
