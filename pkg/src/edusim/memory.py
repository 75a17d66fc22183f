"""Factual, short-term and long-term memory of a learner agent.

Every observed record enters factual memory with a reinforcement counter of 1.
A new record reinforces each earlier record on a similar concept. Records whose
counter reaches the promotion threshold are copied into long-term memory, and
long-term facts are dropped again once the age-based forgetting score
``1 / (1 + exp(-(n - i)))`` exceeds the forgetting threshold.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .cognition import ProficiencyState
from .data import ConceptRelation, concept_similar

DEFAULT_SHORT_WINDOW = 5
DEFAULT_PROMOTE_AT = 5
DEFAULT_FORGET_ABOVE = 0.99


@dataclass(frozen=True)
class Observation:
    learner_id: str
    exercise_id: str
    concept_id: str
    correct: int
    step: int
    text: str = ""
    answer: str = ""
    synthetic: bool = False


@dataclass
class FactualEntry:
    record: Observation
    counter: int = 1

    @property
    def observed_step(self) -> int:
        return self.record.step


@dataclass
class ContextBundle:
    """What the agent is allowed to see of its own memory."""

    short_term: list[Observation]
    summary: str
    reinforced: list[Observation]
    proficiency_tiers: dict[str, str]

    def concepts(self) -> list[str]:
        seen = dict.fromkeys(o.concept_id for o in self.short_term + self.reinforced)
        return list(seen)


def forgetting_score(age: int) -> float:
    return 1.0 / (1.0 + math.exp(-age))


@dataclass
class MemoryState:
    short_window: int = DEFAULT_SHORT_WINDOW
    factual: list[FactualEntry] = field(default_factory=list)
    reinforced: list[FactualEntry] = field(default_factory=list)
    summary: str = ""
    proficiency: ProficiencyState = field(default_factory=ProficiencyState)

    def __post_init__(self):
        if self.short_window < 1:
            raise ValueError("short_window must be >= 1")

    @property
    def short_term(self) -> list[FactualEntry]:
        return self.factual[-self.short_window:] if self.factual else []

    @property
    def last_step(self) -> int | None:
        return self.factual[-1].observed_step if self.factual else None

    def write_observation(self, obs: Observation, rel: ConceptRelation | None = None) -> FactualEntry:
        last = self.last_step
        if last is not None and obs.step <= last:
            raise ValueError(f"observation step {obs.step} is not after step {last}")
        for entry in self.factual:
            if concept_similar(entry.record.concept_id, obs.concept_id, rel):
                entry.counter += 1
        entry = FactualEntry(obs)
        self.factual.append(entry)
        return entry

    def promote_reinforced(self, threshold: int = DEFAULT_PROMOTE_AT) -> list[FactualEntry]:
        """Copy every fact with ``counter >= threshold`` into long-term memory once."""
        if threshold < 1:
            raise ValueError("promotion threshold must be >= 1")
        present = {id(e) for e in self.reinforced}
        promoted = [e for e in self.factual if e.counter >= threshold and id(e) not in present]
        self.reinforced.extend(promoted)
        return promoted

    def apply_forgetting(self, now: int, threshold: float = DEFAULT_FORGET_ABOVE) -> list[FactualEntry]:
        """Drop long-term facts whose forgetting score exceeds ``threshold``.

        The dropped facts stay in factual memory with their counter reset to 1.
        """
        if not 0 < threshold < 1:
            raise ValueError("forgetting threshold must lie in (0, 1)")
        kept, forgotten = [], []
        for e in self.reinforced:
            if forgetting_score(now - e.observed_step) > threshold:
                e.counter = 1
                forgotten.append(e)
            else:
                kept.append(e)
        self.reinforced = kept
        return forgotten

    def set_summary(self, text: str) -> None:
        self.summary = text

    def retrieve_context(self) -> ContextBundle:
        short = [e.record for e in self.short_term]
        reinforced = [e.record for e in self.reinforced]
        concepts = dict.fromkeys(o.concept_id for o in short + reinforced)
        return ContextBundle(
            short_term=short,
            summary=self.summary,
            reinforced=reinforced,
            proficiency_tiers={k: self.proficiency.tier(k) for k in concepts},
        )

    # ---------------------------------------------------------------- snapshot

    def to_lines(self) -> list[str]:
        reinforced_steps = [e.observed_step for e in self.reinforced]
        head = {
            "kind": "memory",
            "short_window": self.short_window,
            "summary": self.summary,
            "reinforced_steps": reinforced_steps,
            "proficiency": {"prof": self.proficiency.prof, "eta": self.proficiency.eta,
                            "default": self.proficiency.default},
        }
        lines = [json.dumps(head, sort_keys=True, ensure_ascii=False)]
        for e in self.factual:
            row = {"kind": "fact", "counter": e.counter, **e.record.__dict__}
            lines.append(json.dumps(row, sort_keys=True, ensure_ascii=False))
        return lines

    @classmethod
    def from_lines(cls, lines) -> "MemoryState":
        rows = [json.loads(x) for x in lines if x.strip()]
        if not rows or rows[0].get("kind") != "memory":
            raise ValueError("memory snapshot must start with a 'memory' header line")
        head = rows[0]
        mem = cls(
            short_window=head["short_window"],
            summary=head["summary"],
            proficiency=ProficiencyState(**head["proficiency"]),
        )
        by_step = {}
        for row in rows[1:]:
            counter = row.pop("counter")
            row.pop("kind")
            entry = FactualEntry(Observation(**row), counter)
            mem.factual.append(entry)
            by_step[entry.observed_step] = entry
        mem.reinforced = [by_step[s] for s in head["reinforced_steps"]]
        return mem

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.to_lines()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "MemoryState":
        return cls.from_lines(Path(path).read_text(encoding="utf-8").splitlines())

    def copy(self) -> "MemoryState":
        return MemoryState.from_lines(self.to_lines())


def write_observation(mem: MemoryState, obs: Observation, rel: ConceptRelation | None = None) -> MemoryState:
    mem.write_observation(obs, rel)
    return mem


def promote_reinforced(mem: MemoryState, threshold: int = DEFAULT_PROMOTE_AT) -> MemoryState:
    mem.promote_reinforced(threshold)
    return mem


def apply_forgetting(mem: MemoryState, now: int, threshold: float = DEFAULT_FORGET_ABOVE) -> MemoryState:
    mem.apply_forgetting(now, threshold)
    return mem


def retrieve_context(mem: MemoryState) -> ContextBundle:
    return mem.retrieve_context()


def set_summary(mem: MemoryState, text: str) -> MemoryState:
    mem.set_summary(text)
    return mem
