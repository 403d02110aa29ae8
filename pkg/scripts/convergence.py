"""Non-blocking D-PSGD on ridge least squares at several horizons."""

import argparse

import numpy as np

from nbsgd import recipes
from nbsgd.experiment import run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--K", type=int, nargs="+", default=[500, 1000, 2000])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--mode", default="nonblocking", choices=["nonblocking", "blocking"])
    args = ap.parse_args()
    print("K,final_grad_norm_sq,final_consensus_dist,avg_grad_norm_sq,sim_time")
    for K in args.K:
        res = run_experiment(recipes.convergence(K, args.seed, mode=args.mode))
        last = res.records[-1]
        avg = np.mean([r.grad_norm_sq for r in res.records])
        print(f"{K},{last.grad_norm_sq:.3e},{last.consensus_dist:.3e},{avg:.4g},{last.sim_time:.2f}")


if __name__ == "__main__":
    main()
