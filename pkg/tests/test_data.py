import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from edusim.data import (
    ConceptRelation, DataError, concept_similar, generate_synthetic, load_dataset,
    load_ground_truth, make_log, split_chronological, write_dataset,
)


def _write(tmp_path, exercises, logs, concepts, relations=None):
    (tmp_path / "exercises.jsonl").write_text("".join(json.dumps(e) + "\n" for e in exercises))
    (tmp_path / "logs.jsonl").write_text("".join(json.dumps(r) + "\n" for r in logs))
    (tmp_path / "concepts.txt").write_text("".join(c + "\n" for c in concepts))
    if relations is not None:
        (tmp_path / "concept_relations.csv").write_text(relations)
    return tmp_path


EX = [{"id": "e1", "text": "t1", "concept_id": "A"}, {"id": "e2", "text": "", "concept_id": "B"}]


class TestLoad:
    def test_valid_directory(self, tmp_path):
        logs = [
            {"learner_id": "u1", "exercise_id": "e2", "correct": 0, "step": 7},
            {"learner_id": "u1", "exercise_id": "e1", "correct": 1, "step": 3},
            {"learner_id": "u2", "exercise_id": "e1", "correct": 1, "step": 0},
        ]
        ds = load_dataset(_write(tmp_path, EX, logs, ["A", "B"], "A,B\n"))
        assert ds.summary() == {"learners": 2, "exercises": 2, "concepts": 2, "records": 3}
        # ordered by stored step, then renumbered from zero
        assert ds.logs["u1"].exercise_ids == ["e1", "e2"]
        assert [r.step for r in ds.logs["u1"]] == [0, 1]
        assert concept_similar("A", "B", ds.relations)

    def test_empty_logs(self, tmp_path):
        with pytest.raises(DataError, match="no learners"):
            load_dataset(_write(tmp_path, EX, [], ["A", "B"]))

    def test_unknown_exercise_named(self, tmp_path):
        logs = [{"learner_id": "u1", "exercise_id": "e9", "correct": 1, "step": 0}]
        with pytest.raises(DataError, match="e9") as err:
            load_dataset(_write(tmp_path, EX, logs, ["A", "B"]))
        assert err.value.problems[0].startswith("logs.jsonl:1")

    def test_missing_file(self, tmp_path):
        _write(tmp_path, EX, [], ["A", "B"])
        (tmp_path / "concepts.txt").unlink()
        with pytest.raises(DataError, match="missing file"):
            load_dataset(tmp_path)

    def test_row_level_diagnostics(self, tmp_path):
        ex = EX + [{"id": "e3", "concept_id": "Z"}, {"id": "e1", "concept_id": "A"}]
        logs = [
            {"learner_id": "u1", "exercise_id": "e1", "correct": 2, "step": 0},
            {"learner_id": "u1", "exercise_id": "e1", "correct": 1, "step": -1},
            {"learner_id": "u1", "exercise_id": "e1", "correct": 1, "step": 0},
            {"learner_id": "u1", "exercise_id": "e1", "correct": 0, "step": 1},
            {"learner_id": "u1", "exercise_id": "e2", "correct": 1, "step": 0},
        ]
        path = _write(tmp_path, ex, logs, ["A", "B"], "A,Q\n")
        with (path / "logs.jsonl").open("a") as fh:
            fh.write("{not json\n")
        with pytest.raises(DataError) as err:
            load_dataset(path)
        problems = "\n".join(err.value.problems)
        assert "exercises.jsonl:3" in problems and "unknown concept 'Z'" in problems
        assert "exercises.jsonl:4" in problems and "duplicate exercise id" in problems
        assert "logs.jsonl:1" in problems and "correct must be 0 or 1" in problems
        assert "logs.jsonl:2" in problems
        assert "logs.jsonl:4" in problems and "more than once" in problems
        assert "logs.jsonl:5" in problems and "duplicate step" in problems
        assert "logs.jsonl:6" in problems and "invalid JSON" in problems
        assert "concept_relations.csv:1" in problems

    def test_edudata_shaped_counts(self, tmp_path):
        counts = [37] * 45 + [36] * 455
        ds, truth = generate_synthetic(0, 500, 1032, 458, records_per_learner=counts)
        loaded = load_dataset(write_dataset(ds, tmp_path, truth))
        assert loaded.summary() == {"learners": 500, "exercises": 1032,
                                    "concepts": 458, "records": 18045}


class TestSplit:
    @pytest.mark.parametrize("n, train, test", [(10, 9, 1), (36, 32, 4), (1, 1, 0)])
    def test_examples(self, n, train, test):
        log = make_log("u", [(f"e{i}", i % 2) for i in range(n)])
        tr, te = split_chronological(log, 0.9)
        assert (len(tr), len(te)) == (train, test)

    def test_empty_log_rejected(self):
        with pytest.raises(ValueError):
            split_chronological(make_log("u", []), 0.9)

    @given(st.integers(1, 200), st.floats(0.01, 1.0))
    def test_reconstructs_and_floor_rule(self, n, ratio):
        log = make_log("u", [(f"e{i}", i % 3 == 0) for i in range(n)])
        tr, te = split_chronological(log, ratio)
        assert tr.records + te.records == log.records
        assert len(tr) == max(1, int(np.floor(ratio * n + 1e-9)))


class TestConceptSimilar:
    rel = ConceptRelation.from_pairs([("A", "B")])

    def test_examples(self):
        assert concept_similar("K", "K", self.rel)
        assert concept_similar("A", "B", self.rel)
        assert not concept_similar("A", "C", self.rel)

    def test_no_self_pairs_stored(self):
        assert ConceptRelation.from_pairs([("A", "A")]).pairs == frozenset()

    @given(st.lists(st.tuples(st.sampled_from("ABCDE"), st.sampled_from("ABCDE"))),
           st.sampled_from("ABCDE"), st.sampled_from("ABCDE"))
    def test_symmetric_and_reflexive(self, pairs, x, y):
        rel = ConceptRelation.from_pairs(pairs)
        assert concept_similar(x, x, rel)
        assert concept_similar(x, y, rel) == concept_similar(y, x, rel)


class TestSynthetic:
    def test_byte_identical_for_same_seed(self, tmp_path):
        for name in ("a", "b"):
            ds, truth = generate_synthetic(5, 20, 30, 12)
            write_dataset(ds, tmp_path / name, truth)
        for f in ("exercises.jsonl", "logs.jsonl", "concepts.txt", "concept_relations.csv",
                  "ground_truth.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_parameter_ranges(self):
        _, truth = generate_synthetic(1, 50, 200, 10)
        a, b = np.array(list(truth.a.values())), np.array(list(truth.b.values()))
        assert a.min() >= 0.5 and a.max() <= 2.5
        assert b.min() >= -3 and b.max() <= 3

    def test_strong_learners_on_easy_items(self):
        # learners with theta >= 2 facing items with b <= -2: a(theta - b) >= 2, p >= 0.88
        ds, truth = generate_synthetic(2, 2000, 200, 20)
        strong = [u for u, t in truth.theta.items() if t >= 2]
        easy = {e for e, b in truth.b.items() if b <= -2}
        ys = [r.correct for u in strong for r in ds.logs[u] if r.exercise_id in easy]
        assert len(ys) > 500
        assert np.mean(ys) > 0.9

    def test_single_item(self):
        ds, _ = generate_synthetic(0, 10, 1, 1)
        assert all(len(log) <= 1 for log in ds.logs.values())

    def test_steps_are_a_prefix_after_load(self, tmp_path):
        ds, truth = generate_synthetic(3, 15, 25, 5, records_per_learner=12)
        loaded = load_dataset(write_dataset(ds, tmp_path, truth))
        for log in loaded.logs.values():
            assert [r.step for r in log] == list(range(len(log)))
        assert load_ground_truth(tmp_path).theta == truth.theta
        assert load_ground_truth(tmp_path / "nothing") is None
