"""Run every experiment end to end on an EduData-shaped synthetic corpus.

    python scripts/run_desk_scale.py --out desk_runs [--learners 500] [--seed 0]

Writes the dataset plus one run directory per command (simulation, CAT survey
with and without history, augmentation -> CAT improvement) under ``--out``.
"""
import argparse
from pathlib import Path

from edusim.cli import main as edusim


def run(*args):
    code = edusim([str(a) for a in args])
    if code != 0:
        raise SystemExit(f"edusim {args[0]} failed with exit code {code}")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="desk_runs")
    p.add_argument("--learners", type=int, default=500)
    p.add_argument("--items", type=int, default=1032)
    p.add_argument("--concepts", type=int, default=458)
    p.add_argument("--records", type=int, default=36)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=0)
    args = p.parse_args()

    out = Path(args.out)
    data = out / "dataset"
    common = ["--dataset", data, "--seed", args.seed, "--out", out, "--force"]
    if args.jobs:
        common += ["--jobs", args.jobs]
    run("ingest", "--synthetic", "--dataset", data, "--seed", args.seed,
        "--learners", args.learners, "--items", args.items, "--concepts", args.concepts,
        "--records", args.records)
    run("calibrate", *common)
    run("simulate", *common)
    run("cat", *common)
    run("cat", "--zero-shot", *common)
    run("improve", *common)


if __name__ == "__main__":
    main()
