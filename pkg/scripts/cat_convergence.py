"""Ability-estimation error of adaptive tests under each selector.

    python scripts/cat_convergence.py --seeds 5 --rounds 10

Stub agents answer with their generating ability; the printed number is the
mean absolute difference between the final estimate and that ability.
"""
import argparse

import numpy as np

from edusim.data import generate_synthetic
from edusim.experiments import Settings, cat_convergence


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--learners", type=int, default=100)
    p.add_argument("--items", type=int, default=300)
    p.add_argument("--rounds", type=int, default=10)
    p.add_argument("--selectors", default="fsi,kli,maat,random")
    args = p.parse_args()

    names = args.selectors.split(",")
    table = {n: [] for n in names}
    for seed in range(args.seeds):
        ds, truth = generate_synthetic(seed, args.learners, args.items, max(1, args.items // 10),
                                       records_per_learner=30)
        errs = cat_convergence(ds, truth, Settings(), seed, names, args.rounds)
        for n in names:
            table[n].append(errs[n])
        print(f"seed {seed}: " + "  ".join(f"{n}={errs[n]:.3f}" for n in names), flush=True)
    print("mean:   " + "  ".join(f"{n}={np.mean(table[n]):.3f}" for n in names))


if __name__ == "__main__":
    main()
