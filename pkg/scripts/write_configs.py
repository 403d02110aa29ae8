"""Write the recipe configs as JSON for use with ``nbsgd simulate``/``compare``."""

import argparse
from pathlib import Path

from nbsgd import recipes


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="configs")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfgs = {
        "hetero_blocking": recipes.heterogeneous("blocking"),
        "hetero_nonblocking": recipes.heterogeneous("nonblocking"),
        "convergence": recipes.convergence(2000),
        "shuffle_off": recipes.shuffling(False),
        "shuffle_on": recipes.shuffling(True),
    }
    for name, cfg in cfgs.items():
        (out / f"{name}.json").write_text(cfg.to_json() + "\n")
        print(out / f"{name}.json")


if __name__ == "__main__":
    main()
