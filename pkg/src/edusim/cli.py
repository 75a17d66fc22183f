"""Command-line entry point: ``edusim <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 backend error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from .backends import BackendError
from .cat import SELECTORS, PoolExhausted
from .cognition import IrtModel, calibrate, infer_ability, model_from_exercises
from .config import RunConfig
from .data import DataError, generate_synthetic, load_dataset, load_ground_truth, write_dataset
from .experiments import (
    REFERENCE, cat_improvement_experiment, run_cat_evaluation, run_simulation,
)

log = logging.getLogger("edusim")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BACKEND = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        overrides[key.strip()] = value
    for key in ("dataset", "seed", "out", "jobs"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    for key in ("zero_shot", "n_agents", "rounds", "selectors", "augment_k"):
        value = getattr(args, key, None)
        if value is not None and value is not False:
            overrides[key] = value
    try:
        return cfg.with_overrides(overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _dataset(cfg: RunConfig):
    if not cfg.dataset:
        raise UsageError("no dataset given (use --dataset or the 'dataset' config key)")
    return load_dataset(cfg.dataset)


def _run_dir(cfg: RunConfig, command: str, force: bool) -> Path:
    path = Path(cfg.out) / f"{command}-{cfg.digest(command)}"
    if path.exists():
        if not force:
            raise UsageError(f"run directory {path} already exists; pass --force to replace it")
        shutil.rmtree(path)
    path.mkdir(parents=True)
    cfg.save(path / "config.json")
    return path


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x) -> str:
    return f"{x:.2f}" if isinstance(x, float) else str(x)


def _table(header, rows) -> str:
    cells = [list(map(str, header))] + [[_fmt(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _knowledge(cfg: RunConfig, ds) -> IrtModel | None:
    return load_ground_truth(cfg.dataset) or model_from_exercises(ds.exercises)


# -------------------------------------------------------------------- commands


def cmd_ingest(cfg: RunConfig, args) -> int:
    if args.synthetic:
        if not cfg.dataset:
            raise UsageError("--synthetic needs --dataset as the output directory")
        records = args.records if args.records and args.records > 0 else None
        ds, truth = generate_synthetic(cfg.seed, args.learners, args.items, args.concepts, records)
        write_dataset(ds, cfg.dataset, truth)
        print(json.dumps({"written": cfg.dataset, **ds.summary()}, sort_keys=True))
        return EXIT_OK
    ds = _dataset(cfg)
    print(json.dumps(ds.summary(), sort_keys=True))
    return EXIT_OK


def cmd_calibrate(cfg: RunConfig, args) -> int:
    ds = _dataset(cfg)
    run = _run_dir(cfg, "calibrate", args.force)
    model = calibrate(ds, cfg.settings().calibration)
    model.save(run / "model.json")
    report = {**ds.summary(), "epochs": len(model.history) - 1, "objective": model.history[-1]}
    truth = load_ground_truth(cfg.dataset)
    if truth is not None:
        lids = sorted(ds.logs)
        report["theta_pearson_r"] = float(np.corrcoef(
            [truth.theta[k] for k in lids], [model.theta[k] for k in lids])[0, 1])
        items = sorted(ds.exercises)
        report["b_pearson_r"] = float(np.corrcoef(
            [truth.b[k] for k in items], [model.b[k] for k in items])[0, 1])
    _write_json(run / "report.json", report)
    print(run)
    return EXIT_OK


def cmd_infer(cfg: RunConfig, args) -> int:
    ds = _dataset(cfg)
    model = IrtModel.load(args.model)
    lids = args.learner or sorted(ds.logs)
    for lid in lids:
        if lid not in ds.logs:
            raise DataError(f"unknown learner {lid!r}")
        print(json.dumps({"learner_id": lid, "theta": infer_ability(model, ds.logs[lid])}))
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, args) -> int:
    ds = _dataset(cfg)
    run = _run_dir(cfg, "simulate", args.force)
    settings = cfg.settings(run / "trace.jsonl" if cfg.trace else None)
    res = run_simulation(ds, settings, cfg.seed, cfg.split_ratio)
    with (run / "predictions.jsonl").open("w", encoding="utf-8") as fh:
        for p in res.predictions:
            for eid, y, o in zip(p.exercise_ids, p.truths, p.outcomes):
                fh.write(json.dumps({"learner_id": p.learner_id, "truth": y, **o.to_dict()},
                                    sort_keys=True) + "\n")
    _write_json(run / "report.json", res.report())
    m = res.metrics
    ref = REFERENCE["simulation"]
    _write_csv(run / "table1.csv", ["model", "acc", "f1", "rouge3"], [
        ["edusim", 100 * m.acc, 100 * m.f1, 100 * m.rouge3],
        ["reference", ref["acc"], ref["f1"], ref["rouge3"]],
    ])
    _write_csv(run / "table2.csv", ["model", "knowledge_acc"], [
        ["edusim", 100 * res.knowledge_acc], ["reference", REFERENCE["knowledge_acc"]]])
    sr = res.success_rates
    _write_csv(run / "success_rates.csv", ["bin_low", "bin_high", "real", "simulated"], [
        [i / len(sr.real), (i + 1) / len(sr.real), r, s]
        for i, (r, s) in enumerate(zip(sr.real, sr.simulated))])
    text = _table(["", "ACC", "F1", "ROUGE-3", "knowledge ACC"], [
        ["simulated", 100 * m.acc, 100 * m.f1, 100 * m.rouge3, 100 * res.knowledge_acc],
        ["reference (not asserted)", ref["acc"], ref["f1"], ref["rouge3"], REFERENCE["knowledge_acc"]],
    ]) + f"success-rate histogram L1 distance: {sr.l1:.4f}\n"
    (run / "report.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    print(run)
    return EXIT_OK


def cmd_cat(cfg: RunConfig, args) -> int:
    unknown = [s for s in cfg.selector_names if s not in SELECTORS]
    if unknown:
        raise UsageError(f"unknown selector {unknown[0]!r}; registered: {', '.join(sorted(SELECTORS))}")
    ds = _dataset(cfg)
    run = _run_dir(cfg, "cat", args.force)
    settings = cfg.settings(run / "trace.jsonl" if cfg.trace else None)
    ev = run_cat_evaluation(
        ds, settings, cfg.seed, cfg.selector_names, cfg.rounds, cfg.n_agents,
        zero_shot=cfg.zero_shot, knowledge=_knowledge(cfg, ds),
        pretrain_agents=cfg.pretrain_agents, pretrain_items=cfg.pretrain_items)
    with (run / "sessions.jsonl").open("w", encoding="utf-8") as fh:
        for s in ev.sessions:
            fh.write(s.to_json() + "\n")
    rows = [[name, c["satisfaction"], c["aod"], c["gain"]] for name, c in ev.survey_counts.items()]
    _write_csv(run / "table3.csv", ["selector", "satisfaction", "aod", "gain"], rows)
    _write_json(run / "report.json", ev.report())
    text = (f"{len(ev.sessions)} sessions\n"
            + _table(["selector", "satisfaction", "AoD", "gain"], rows))
    (run / "report.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    print(run)
    return EXIT_OK


def cmd_improve(cfg: RunConfig, args) -> int:
    ds = _dataset(cfg)
    run = _run_dir(cfg, "improve", args.force)
    settings = cfg.settings(run / "trace.jsonl" if cfg.trace else None)
    res = cat_improvement_experiment(
        ds, settings, cfg.seed, cfg.selector_names, cfg.length_values, cfg.augment_k,
        cfg.train_fraction, knowledge=_knowledge(cfg, ds))
    rows = [[c.selector, c.length, c.f1_base, c.f1_augmented, c.imp] for c in res.cells]
    _write_csv(run / "table4.csv", ["selector", "length", "f1_base", "f1_augmented", "imp"], rows)
    _write_json(run / "report.json", res.report())
    text = _table(["selector", "length", "F1", "F1+", "Imp."], rows)
    (run / "report.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    print(run)
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest, "calibrate": cmd_calibrate, "infer": cmd_infer,
    "simulate": cmd_simulate, "cat": cmd_cat, "improve": cmd_improve,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file with flat keys")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--dataset", help="dataset directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="root directory for run outputs")
    common.add_argument("--jobs", type=int, help="worker threads (default: all cores)")
    common.add_argument("--force", action="store_true", help="replace an existing run directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="edusim", description=__doc__,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ing = sub.add_parser("ingest", parents=[common], help="validate a dataset or write a synthetic one")
    ing.add_argument("--synthetic", action="store_true")
    ing.add_argument("--learners", type=int, default=100)
    ing.add_argument("--items", type=int, default=200)
    ing.add_argument("--concepts", type=int, default=40)
    ing.add_argument("--records", type=int, default=0, help="records per learner (0 = whole bank)")

    sub.add_parser("calibrate", parents=[common], help="fit the 2PL model")
    inf = sub.add_parser("infer", parents=[common], help="EAP ability of learners under a saved model")
    inf.add_argument("--model", required=True)
    inf.add_argument("--learner", action="append")

    sub.add_parser("simulate", parents=[common], help="response simulation protocol")

    cat = sub.add_parser("cat", parents=[common], help="adaptive-testing sessions and survey")
    cat.add_argument("--zero-shot", dest="zero_shot", action="store_true")
    cat.add_argument("--agents", dest="n_agents", type=int)
    cat.add_argument("--rounds", type=int)
    cat.add_argument("--selectors", help="comma-separated selector names")

    imp = sub.add_parser("improve", parents=[common], help="augmentation -> CAT improvement table")
    imp.add_argument("--k", dest="augment_k", type=int)
    imp.add_argument("--selectors", help="comma-separated selector names")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help or an argparse usage error
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        print(f"edusim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, PoolExhausted, ValueError, KeyError) as exc:
        print(f"edusim: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BackendError as exc:
        print(f"edusim: backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
