"""Seed sweep of the augmentation -> CAT improvement experiment.

    python scripts/sweep_improvement.py --seeds 10 --learners 1000

For each seed a fresh synthetic corpus is generated, agents reason with the
generator's item parameters, and the six (selector, length) improvement
deltas are printed together with how many are non-negative.
"""
import argparse
import time

from edusim.data import generate_synthetic
from edusim.experiments import Settings, cat_improvement_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--first-seed", type=int, default=0)
    p.add_argument("--learners", type=int, default=1000)
    p.add_argument("--items", type=int, default=1032)
    p.add_argument("--concepts", type=int, default=458)
    p.add_argument("--records", type=int, default=36)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--jobs", type=int, default=1)
    args = p.parse_args()

    passing = cells = positive = 0
    for seed in range(args.first_seed, args.first_seed + args.seeds):
        ds, truth = generate_synthetic(seed, args.learners, args.items, args.concepts,
                                       records_per_learner=args.records)
        start = time.perf_counter()
        res = cat_improvement_experiment(ds, Settings(jobs=args.jobs), seed, k=args.k,
                                         knowledge=truth)
        imps = [c.imp for c in res.cells]
        ok = sum(i >= 0 for i in imps)
        passing += ok >= 4
        cells += len(imps)
        positive += ok
        print(f"seed {seed:3d}  {ok}/6 non-negative  "
              + " ".join(f"{c.selector}@{c.length}:{c.imp:+.2f}" for c in res.cells)
              + f"  ({time.perf_counter() - start:.1f}s)", flush=True)
    print(f"{passing}/{args.seeds} seeds with >= 4/6 non-negative cells; "
          f"{positive}/{cells} cells non-negative")


if __name__ == "__main__":
    main()
