"""Per-sample training counts with and without per-epoch reshuffling."""

import argparse

from nbsgd import recipes
from nbsgd.experiment import run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epochs", type=int, default=50)
    args = ap.parse_args()
    for shuffle in (False, True):
        res = run_experiment(recipes.shuffling(shuffle, args.epochs))
        for w in res.cluster.workers:
            c = w.trained_count
            print(f"shuffle={shuffle} worker={w.id} never_trained={int((c == 0).sum())} "
                  f"min={int(c.min())} max={int(c.max())}")


if __name__ == "__main__":
    main()
