"""Learner response logs, exercise banks and concept relations.

A dataset lives in a directory::

    exercises.jsonl          {"id", "text", "concept_id"[, "irt_a", "irt_b"]}
    logs.jsonl               {"learner_id", "exercise_id", "correct", "step"}
    concepts.txt             one concept id per line
    concept_relations.csv    optional, two similar concept ids per line
    ground_truth.json        optional, written by the synthetic generator
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

EXERCISES_FILE = "exercises.jsonl"
LOGS_FILE = "logs.jsonl"
CONCEPTS_FILE = "concepts.txt"
RELATIONS_FILE = "concept_relations.csv"
GROUND_TRUTH_FILE = "ground_truth.json"

MAX_REPORTED_ERRORS = 20


class DataError(ValueError):
    """Raised when a dataset fails validation. ``problems`` holds row-level messages."""

    def __init__(self, message: str, problems: Sequence[str] = ()):
        self.problems = list(problems)
        if self.problems:
            shown = self.problems[:MAX_REPORTED_ERRORS]
            more = len(self.problems) - len(shown)
            message = message + ":\n  " + "\n  ".join(shown)
            if more > 0:
                message += f"\n  ... and {more} more"
        super().__init__(message)


@dataclass(frozen=True)
class Exercise:
    id: str
    concept_id: str
    text: str = ""
    irt_a: float | None = None
    irt_b: float | None = None

    def __post_init__(self):
        if not self.concept_id:
            raise DataError(f"exercise {self.id!r} has an empty concept_id")
        if self.irt_a is not None and not self.irt_a > 0:
            raise DataError(f"exercise {self.id!r} has non-positive irt_a={self.irt_a}")


@dataclass(frozen=True)
class ResponseRecord:
    learner_id: str
    exercise_id: str
    correct: int
    step: int


@dataclass(frozen=True)
class LearnerLog:
    learner_id: str
    records: tuple[ResponseRecord, ...] = ()

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def exercise_ids(self) -> list[str]:
        return [r.exercise_id for r in self.records]

    @property
    def responses(self) -> list[int]:
        return [r.correct for r in self.records]


@dataclass(frozen=True)
class ConceptRelation:
    """Symmetric "similar concept" table. Identity similarity is implicit."""

    pairs: frozenset[frozenset[str]] = frozenset()

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> "ConceptRelation":
        return cls(frozenset(frozenset((x, y)) for x, y in pairs if x != y))

    def __contains__(self, pair) -> bool:
        return frozenset(pair) in self.pairs


def concept_similar(k1: str, k2: str, rel: ConceptRelation | None = None) -> bool:
    if k1 == k2:
        return True
    return rel is not None and frozenset((k1, k2)) in rel.pairs


@dataclass(frozen=True)
class Dataset:
    exercises: Mapping[str, Exercise]
    logs: Mapping[str, LearnerLog]
    concepts: frozenset[str]
    relations: ConceptRelation = field(default_factory=ConceptRelation)

    @property
    def n_records(self) -> int:
        return sum(len(log) for log in self.logs.values())

    def summary(self) -> dict:
        return {
            "learners": len(self.logs),
            "exercises": len(self.exercises),
            "concepts": len(self.concepts),
            "records": self.n_records,
        }

    def concept_of(self, exercise_id: str) -> str:
        return self.exercises[exercise_id].concept_id

    def subset(self, learner_ids: Iterable[str]) -> "Dataset":
        """Same bank and concepts, restricted to the given learners."""
        logs = {lid: self.logs[lid] for lid in learner_ids}
        return replace(self, logs=logs)

    def with_logs(self, logs: Mapping[str, LearnerLog]) -> "Dataset":
        return replace(self, logs=dict(logs))


def make_log(learner_id: str, items: Sequence[tuple[str, int]], start: int = 0) -> LearnerLog:
    """Build a log from (exercise_id, correct) pairs with consecutive steps."""
    return LearnerLog(
        learner_id,
        tuple(ResponseRecord(learner_id, e, int(y), start + i) for i, (e, y) in enumerate(items)),
    )


def split_chronological(log: LearnerLog, ratio: float = 0.9) -> tuple[LearnerLog, LearnerLog]:
    """First ``floor(ratio * n)`` records (at least one) go to train, the rest to test."""
    if not 0 < ratio <= 1:
        raise ValueError(f"ratio must lie in (0, 1], got {ratio}")
    n = len(log)
    if n == 0:
        raise ValueError(f"cannot split empty log of learner {log.learner_id!r}")
    # guard against 0.9 * 10 = 9.000000000000002 style representation error
    cut = max(1, math.floor(ratio * n + 1e-9))
    return (
        LearnerLog(log.learner_id, log.records[:cut]),
        LearnerLog(log.learner_id, log.records[cut:]),
    )


# --------------------------------------------------------------------------- io


def _read_jsonl(path: Path, problems: list[str]) -> list[tuple[int, dict]]:
    rows = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                problems.append(f"{path.name}:{lineno}: invalid JSON ({exc.msg})")
                continue
            if not isinstance(obj, dict):
                problems.append(f"{path.name}:{lineno}: expected a JSON object")
                continue
            rows.append((lineno, obj))
    return rows


def _require(path: Path) -> Path:
    if not path.is_file():
        raise DataError(f"missing file {path}")
    return path


def load_dataset(path: str | Path) -> Dataset:
    """Load and cross-validate a dataset directory.

    Steps are normalised to ``0..n-1`` per learner after ordering by the stored
    step. Every problem found is reported with its file and line number.
    """
    root = Path(path)
    if not root.is_dir():
        raise DataError(f"dataset directory not found: {root}")
    problems: list[str] = []

    concepts = []
    with _require(root / CONCEPTS_FILE).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                concepts.append(line.strip())
    concept_set = frozenset(concepts)

    exercises: dict[str, Exercise] = {}
    for lineno, row in _read_jsonl(_require(root / EXERCISES_FILE), problems):
        where = f"{EXERCISES_FILE}:{lineno}"
        eid, cid = row.get("id"), row.get("concept_id")
        if not isinstance(eid, str) or not eid:
            problems.append(f"{where}: missing or non-string id")
            continue
        if not isinstance(cid, str) or not cid:
            problems.append(f"{where}: exercise {eid!r} has no concept_id")
            continue
        if eid in exercises:
            problems.append(f"{where}: duplicate exercise id {eid!r}")
            continue
        if cid not in concept_set:
            problems.append(f"{where}: exercise {eid!r} references unknown concept {cid!r}")
            continue
        try:
            a = row.get("irt_a")
            b = row.get("irt_b")
            exercises[eid] = Exercise(
                eid,
                cid,
                text=row.get("text") or "",
                irt_a=None if a is None else float(a),
                irt_b=None if b is None else float(b),
            )
        except (DataError, TypeError, ValueError) as exc:
            problems.append(f"{where}: {exc}")

    raw: dict[str, list[tuple[int, ResponseRecord]]] = {}
    seen: dict[str, dict] = {}
    for lineno, row in _read_jsonl(_require(root / LOGS_FILE), problems):
        where = f"{LOGS_FILE}:{lineno}"
        lid, eid, y, step = (row.get(k) for k in ("learner_id", "exercise_id", "correct", "step"))
        if not isinstance(lid, str) or not isinstance(eid, str):
            problems.append(f"{where}: learner_id and exercise_id must be strings")
            continue
        if y not in (0, 1) or isinstance(y, bool):
            problems.append(f"{where}: correct must be 0 or 1, got {y!r}")
            continue
        if not isinstance(step, int) or isinstance(step, bool) or step < 0:
            problems.append(f"{where}: step must be a non-negative integer, got {step!r}")
            continue
        if eid not in exercises:
            problems.append(f"{where}: unknown exercise id {eid!r}")
            continue
        per = seen.setdefault(lid, {"steps": set(), "items": set()})
        if step in per["steps"]:
            problems.append(f"{where}: duplicate step {step} for learner {lid!r}")
            continue
        if eid in per["items"]:
            problems.append(f"{where}: learner {lid!r} answers {eid!r} more than once")
            continue
        per["steps"].add(step)
        per["items"].add(eid)
        raw.setdefault(lid, []).append((step, ResponseRecord(lid, eid, y, step)))

    pairs = []
    rel_path = root / RELATIONS_FILE
    if rel_path.is_file():
        with rel_path.open(encoding="utf-8", newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), 1):
                row = [c.strip() for c in row if c.strip()]
                if not row:
                    continue
                if len(row) != 2:
                    problems.append(f"{RELATIONS_FILE}:{lineno}: expected two concept ids")
                    continue
                unknown = [c for c in row if c not in concept_set]
                if unknown:
                    problems.append(f"{RELATIONS_FILE}:{lineno}: unknown concept {unknown[0]!r}")
                    continue
                pairs.append((row[0], row[1]))

    if problems:
        raise DataError(f"invalid dataset {root}", problems)
    if not raw:
        raise DataError(f"no learners in {root / LOGS_FILE}")

    logs = {}
    for lid in sorted(raw):
        ordered = [r for _, r in sorted(raw[lid], key=lambda t: t[0])]
        logs[lid] = LearnerLog(
            lid, tuple(replace(r, step=i) for i, r in enumerate(ordered))
        )
    return Dataset(
        exercises=dict(sorted(exercises.items())),
        logs=logs,
        concepts=concept_set,
        relations=ConceptRelation.from_pairs(pairs),
    )


def write_dataset(ds: Dataset, path: str | Path, ground_truth=None) -> Path:
    """Persist ``ds`` in the directory format. Output is byte-stable for equal input."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    with (root / EXERCISES_FILE).open("w", encoding="utf-8") as fh:
        for ex in ds.exercises.values():
            row = {"id": ex.id, "text": ex.text, "concept_id": ex.concept_id}
            if ex.irt_a is not None:
                row["irt_a"] = ex.irt_a
            if ex.irt_b is not None:
                row["irt_b"] = ex.irt_b
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    with (root / LOGS_FILE).open("w", encoding="utf-8") as fh:
        for log in ds.logs.values():
            for r in log.records:
                fh.write(json.dumps({
                    "learner_id": r.learner_id,
                    "exercise_id": r.exercise_id,
                    "correct": r.correct,
                    "step": r.step,
                }, ensure_ascii=False) + "\n")
    (root / CONCEPTS_FILE).write_text(
        "".join(c + "\n" for c in sorted(ds.concepts)), encoding="utf-8"
    )
    if ds.relations.pairs:
        rows = sorted(tuple(sorted(p)) for p in ds.relations.pairs)
        with (root / RELATIONS_FILE).open("w", encoding="utf-8", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
    if ground_truth is not None:
        ground_truth.save(root / GROUND_TRUTH_FILE)
    return root


# -------------------------------------------------------------------- synthetic


def generate_synthetic(
    seed: int,
    n_learners: int,
    n_items: int,
    n_concepts: int,
    records_per_learner: int | Sequence[int] | None = None,
    relation_fraction: float = 0.25,
):
    """Sample a 2PL-consistent dataset together with its generating parameters.

    Items get ``a ~ U[0.5, 2.5]`` and ``b ~ U[-3, 3]``, learners ``theta ~ N(0, 1)``.
    Each learner answers a random, ordered subset of the bank: all of it when
    ``records_per_learner`` is None, otherwise the given count (an int, or one
    count per learner). Returns ``(Dataset, IrtModel)``.
    """
    from .cognition import IrtModel

    if min(n_learners, n_items, n_concepts) < 1:
        raise ValueError("sizes must be >= 1")
    rng = np.random.default_rng(seed)
    width_i = len(str(n_items - 1))
    width_l = len(str(n_learners - 1))
    width_k = len(str(n_concepts - 1))
    item_ids = [f"e{i:0{width_i}d}" for i in range(n_items)]
    learner_ids = [f"u{i:0{width_l}d}" for i in range(n_learners)]
    concept_ids = [f"k{i:0{width_k}d}" for i in range(n_concepts)]

    a = rng.uniform(0.5, 2.5, n_items)
    b = rng.uniform(-3.0, 3.0, n_items)
    theta = rng.standard_normal(n_learners)
    # every concept is used when there are enough items
    concept_idx = rng.permutation(np.arange(n_items) % n_concepts)

    exercises = {
        eid: Exercise(eid, concept_ids[concept_idx[j]],
                      text=f"Exercise {eid} on concept {concept_ids[concept_idx[j]]}.")
        for j, eid in enumerate(item_ids)
    }

    if records_per_learner is None:
        counts = [n_items] * n_learners
    elif isinstance(records_per_learner, (int, np.integer)):
        counts = [int(records_per_learner)] * n_learners
    else:
        counts = [int(c) for c in records_per_learner]
        if len(counts) != n_learners:
            raise ValueError("records_per_learner needs one count per learner")
    counts = [min(c, n_items) for c in counts]

    logs = {}
    for u, lid in enumerate(learner_ids):
        order = rng.permutation(n_items)[: counts[u]]
        p = 1.0 / (1.0 + np.exp(-a[order] * (theta[u] - b[order])))
        ys = (rng.random(len(order)) < p).astype(int)
        logs[lid] = make_log(lid, [(item_ids[j], int(y)) for j, y in zip(order, ys)])

    pairs = []
    n_pairs = int(relation_fraction * n_concepts / 2)
    if n_pairs:
        shuffled = rng.permutation(n_concepts)
        pairs = [(concept_ids[shuffled[2 * i]], concept_ids[shuffled[2 * i + 1]])
                 for i in range(n_pairs)]

    ds = Dataset(
        exercises=exercises,
        logs=logs,
        concepts=frozenset(concept_ids),
        relations=ConceptRelation.from_pairs(pairs),
    )
    truth = IrtModel(
        theta={lid: float(t) for lid, t in zip(learner_ids, theta)},
        a={eid: float(x) for eid, x in zip(item_ids, a)},
        b={eid: float(x) for eid, x in zip(item_ids, b)},
    )
    return ds, truth


def load_ground_truth(path: str | Path):
    """Return the generator's parameters for a dataset directory, or None."""
    from .cognition import IrtModel

    gt = Path(path) / GROUND_TRUTH_FILE
    return IrtModel.load(gt) if gt.is_file() else None
