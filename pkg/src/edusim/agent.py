"""One generative learner agent: profile, memory and the action chain."""
from __future__ import annotations

import logging
import random
import re
from dataclasses import dataclass, field
from typing import Sequence

from .backends import BackendError, GenerationParams, LlmBackend, TraceWriter
from .cognition import IrtModel
from .data import ConceptRelation, Exercise, ResponseRecord, concept_similar
from .memory import (
    DEFAULT_FORGET_ABOVE, DEFAULT_PROMOTE_AT, DEFAULT_SHORT_WINDOW,
    ContextBundle, MemoryState, Observation,
)
from .profile import ABILITY_BOUNDS, LearnerProfile, tierize
from .cognition import ProficiencyState
from .prompts import Prompt, PromptTemplate, load_templates

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AgentConfig:
    short_window: int = DEFAULT_SHORT_WINDOW
    promote_at: int = DEFAULT_PROMOTE_AT
    forget_above: float = DEFAULT_FORGET_ABOVE
    eta: float = 0.2
    summary_cap: int = 1200
    zero_shot: bool = False
    record_rejections: bool = True
    ability_bounds: tuple[float, float] = ABILITY_BOUNDS
    n_candidates: int = 3
    temperature: float = 0.0
    max_tokens: int = 256

    def __post_init__(self):
        if self.short_window < 1 or self.promote_at < 1:
            raise ValueError("short_window and promote_at must be >= 1")
        if not 0 < self.forget_above < 1:
            raise ValueError("forget_above must lie in (0, 1)")


@dataclass(frozen=True)
class Truth:
    """Ground truth for supervised replay: the exercise's concept and the learner's response."""

    concept: str | None = None
    y: int | None = None


@dataclass
class StepOutcome:
    exercise_id: str
    accepted: bool
    predicted_concept: str
    solution_idea: str = ""
    answer: str = ""
    self_predicted_correct: bool = False
    final_label: int = 0
    rationale: str = ""
    reflections_triggered: list[str] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class LearnerAgent:
    """Simulates one learner over a text-generation backend.

    ``model`` supplies the item parameters the agent's IRT tool knows about;
    ``concepts`` is the pool distractor concepts are drawn from.
    """

    def __init__(self, learner_id: str, profile: LearnerProfile, backend: LlmBackend, *,
                 model: IrtModel, concepts: Sequence[str], seed: int = 0,
                 relations: ConceptRelation | None = None,
                 config: AgentConfig = AgentConfig(),
                 templates: dict[str, PromptTemplate] | None = None,
                 trace: TraceWriter | None = None):
        self.learner_id = learner_id
        self.profile = profile
        self.backend = backend
        self.model = model
        self.concepts = sorted(concepts)
        self.seed = seed
        self.relations = relations
        self.config = config
        self.templates = templates or load_templates()
        self.trace = trace
        self.memory = MemoryState(short_window=config.short_window,
                                  proficiency=ProficiencyState(eta=config.eta))
        self.administered: set[str] = set()
        self._rng = random.Random(seed)
        self._params = GenerationParams(config.temperature, config.max_tokens)

    @property
    def proficiency(self) -> ProficiencyState:
        return self.memory.proficiency

    @property
    def next_step(self) -> int:
        last = self.memory.last_step
        return 0 if last is None else last + 1

    # ---------------------------------------------------------------- helpers

    def item_params(self, ex: Exercise, model: IrtModel | None = None) -> tuple[float, float]:
        model = model or self.model
        if ex.id in model.a and ex.id in model.b:
            return model.a[ex.id], model.b[ex.id]
        if ex.irt_a is not None and ex.irt_b is not None:
            return ex.irt_a, ex.irt_b
        raise KeyError(f"no difficulty known for exercise {ex.id!r}")

    def _ask(self, prompt: Prompt) -> str:
        try:
            out = self.backend.complete(prompt, self._params)
        except BackendError:
            raise
        except Exception as exc:  # transport errors surface as BackendError
            raise BackendError(str(exc)) from exc
        if self.trace is not None:
            self.trace.write(learner_id=self.learner_id, step=self.next_step,
                             template=prompt.name, version=prompt.version,
                             prompt=prompt.text, output=out)
        return out

    def _profile_text(self) -> str:
        t = self.profile.tiers
        pref = ", ".join(self.profile.preference) or "none yet"
        return (f"activity: {t.get('activity', '?')}; practice diversity: {t.get('diversity', '?')}; "
                f"success rate: {t.get('success_rate', '?')}; problem-solving ability: "
                f"{t.get('ability', '?')}; preferred concepts: {pref}")

    @staticmethod
    def _records_text(obs: Sequence[Observation]) -> str:
        if not obs:
            return "(none)"
        return "\n".join(
            f"- step {o.step}: exercise {o.exercise_id} (concept {o.concept_id}) "
            f"{'correct' if o.correct else 'incorrect'}" for o in obs
        )

    def _context_text(self, ctx: ContextBundle) -> str:
        tiers = ", ".join(f"{k}: {v}" for k, v in ctx.proficiency_tiers.items()) or "(none)"
        return (f"Summary: {ctx.summary or '(none)'}\n"
                f"Recent records:\n{self._records_text(ctx.short_term)}\n"
                f"Reinforced facts:\n{self._records_text(ctx.reinforced)}\n"
                f"Concept proficiency: {tiers}")

    @staticmethod
    def _exercise_text(ex: Exercise, reveal_concept: bool = True) -> str:
        if ex.text:
            return f"[{ex.id}] {ex.text}"
        if reveal_concept:
            return f"[{ex.id}] (no text available) an exercise on concept {ex.concept_id}"
        return f"[{ex.id}] (no text available)"

    def _slots(self, ex: Exercise, reveal_concept: bool = True) -> dict[str, str]:
        return {
            "profile": self._profile_text(),
            "context": self._context_text(self.memory.retrieve_context()),
            "exercise": self._exercise_text(ex, reveal_concept),
        }

    # ---------------------------------------------------------------- actions

    def decide_accept(self, ex: Exercise, model: IrtModel | None = None) -> tuple[bool, str]:
        a, b = self.item_params(ex, model)
        meta = {
            "difficulty_tier": tierize(b, self.config.ability_bounds),
            "ability_tier": tierize(self.profile.ability, self.config.ability_bounds),
            "proficiency_tier": self.proficiency.tier(ex.concept_id),
        }
        prompt = self.templates["accept"].render(
            meta, difficulty=meta["difficulty_tier"], **self._slots(ex))
        for _ in range(2):
            text = self._ask(prompt)
            m = re.search(r"\b(accept|reject)\b", text, re.IGNORECASE)
            if m:
                return m.group(1).lower() == "accept", text.strip()
        return True, "unparseable decision; attempting the exercise"

    def candidate_concepts(self, ex: Exercise) -> list[str]:
        """The true concept plus unrelated distractors, shuffled with the agent's seed."""
        truth = ex.concept_id
        pool = [k for k in self.concepts if not concept_similar(k, truth, self.relations)]
        k = min(self.config.n_candidates - 1, len(pool))
        candidates = [truth] + self._rng.sample(pool, k)
        self._rng.shuffle(candidates)
        return candidates

    def identify_concept(self, ex: Exercise, candidates: Sequence[str] | None = None,
                         flags: list[str] | None = None) -> str:
        candidates = list(candidates) if candidates is not None else self.candidate_concepts(ex)
        prompt = self.templates["identify"].render(
            {"truth": ex.concept_id, "candidates": candidates},
            candidates="\n".join(f"- {c}" for c in candidates),
            **self._slots(ex, reveal_concept=False))
        for _ in range(2):
            text = self._ask(prompt).strip()
            if text in candidates:
                return text
            hits = [c for c in candidates if re.search(rf"(?<![\w-]){re.escape(c)}(?![\w-])", text)]
            if len(hits) == 1:
                return hits[0]
        if flags is not None:
            flags.append("identify_fallback")
        return candidates[0]

    def solve_exercise(self, ex: Exercise, flags: list[str] | None = None) -> tuple[str, str, bool]:
        a, b = self.item_params(ex)
        meta = {"concept": ex.concept_id, "exercise_id": ex.id,
                "theta": self.profile.ability, "a": a, "b": b}
        slots = self._slots(ex)
        idea = self._ask(self.templates["solve_idea"].render(meta, **slots)).strip()
        answer = self._ask(self.templates["solve_answer"].render(meta, idea=idea, **slots)).strip()
        prompt = self.templates["solve_predict"].render(meta, idea=idea, answer=answer, **slots)
        for _ in range(2):
            m = re.match(r"\W*(yes|no)\b", self._ask(prompt), re.IGNORECASE)
            if m:
                return idea, answer, m.group(1).lower() == "yes"
        if flags is not None:
            flags.append("prediction_fallback")
        return idea, answer, False

    def corrective_reflection(self, kind: str, truth, predicted, ex: Exercise | None = None) -> str:
        """Fold a correction note into the long-term summary. Disabled in zero-shot mode."""
        if self.config.zero_shot:
            raise RuntimeError("corrective reflection is disabled in zero-shot mode")
        if kind == "concept":
            note = f"Correction (concept): exercise {ex.id if ex else '?'} tests {truth}, not {predicted}."
        elif kind == "response":
            note = (f"Correction (response): predicted {'correct' if predicted else 'incorrect'}, "
                    f"real student was {'correct' if truth else 'incorrect'} "
                    f"(predicted={int(predicted)}, truth={int(truth)}).")
        else:
            raise ValueError(f"unknown mismatch kind {kind!r}")
        prompt = self.templates["corrective"].render(
            {"kind": kind, "truth": truth, "predicted": predicted},
            kind="knowledge-concept choice" if kind == "concept" else "response prediction",
            truth=str(truth), predicted=str(predicted),
            exercise=self._exercise_text(ex) if ex else "(unknown)")
        try:
            insight = self._ask(prompt).strip()
        except BackendError:
            insight = ""
        full = note + (" " + insight if insight else "")
        self.memory.set_summary((full + "\n" + self.memory.summary).strip()[: self.config.summary_cap])
        return full

    def summary_reflection(self, flags: list[str] | None = None) -> str:
        ctx = self.memory.retrieve_context()
        corrections = [ln for ln in self.memory.summary.splitlines() if ln.startswith("Correction")][:3]
        meta = {
            "recent_concepts": [o.concept_id for o in ctx.short_term],
            "successes": sum(o.correct for o in ctx.short_term),
            "attempts": len(ctx.short_term),
            "reinforced_concepts": list(dict.fromkeys(o.concept_id for o in ctx.reinforced)),
            "corrections": corrections,
        }
        prompt = self.templates["summary"].render(
            meta, profile=self._profile_text(), previous=ctx.summary or "(none)",
            short_term=self._records_text(ctx.short_term),
            reinforced=self._records_text(ctx.reinforced))
        try:
            text = self._ask(prompt).strip()[: self.config.summary_cap]
        except BackendError as exc:
            log.warning("summary reflection failed for %s: %s", self.learner_id, exc)
            if flags is not None:
                flags.append("summary_failed")
            return self.memory.summary
        # recent corrections survive the rewrite even if the backend drops them
        kept = [c for c in corrections if c not in text]
        if kept:
            text = "\n".join(kept + [text])[: self.config.summary_cap]
        self.memory.set_summary(text)
        return text

    # --------------------------------------------------------------- pipeline

    def _commit(self, ex: Exercise, y: int, answer: str = "", synthetic: bool = False,
                write: bool = True, flags: list[str] | None = None) -> None:
        if write:
            obs = Observation(self.learner_id, ex.id, ex.concept_id, int(y), self.next_step,
                              ex.text, answer, synthetic)
            self.memory.write_observation(obs, self.relations)
            self.memory.apply_forgetting(obs.step, self.config.forget_above)
            self.memory.promote_reinforced(self.config.promote_at)
        self.proficiency.update(ex.concept_id, int(y))
        self.administered.add(ex.id)
        self.summary_reflection(flags)

    def observe(self, record: ResponseRecord, ex: Exercise) -> None:
        """Replay one real record: the agent watches its learner practice."""
        if ex.id in self.administered:
            raise ValueError(f"exercise {ex.id!r} already seen by {self.learner_id!r}")
        self._commit(ex, record.correct)

    def step(self, ex: Exercise, truth: Truth | None = None) -> StepOutcome:
        if ex.id in self.administered:
            raise ValueError(f"exercise {ex.id!r} was already administered to {self.learner_id!r}")
        supervised = truth is not None and not self.config.zero_shot
        flags: list[str] = []
        reflections: list[str] = []

        accepted, rationale = self.decide_accept(ex)
        predicted_concept = self.identify_concept(ex, flags=flags)
        true_concept = (truth.concept or ex.concept_id) if truth is not None else None
        if supervised and predicted_concept != true_concept:
            self.corrective_reflection("concept", true_concept, predicted_concept, ex)
            reflections.append("concept")

        idea = answer = ""
        predicted = False
        if accepted:
            idea, answer, predicted = self.solve_exercise(ex, flags)
        final = int(accepted and predicted)
        if supervised and truth.y is not None and final != truth.y:
            self.corrective_reflection("response", truth.y, final, ex)
            reflections.append("response")

        self._commit(ex, final, answer, synthetic=True,
                     write=accepted or self.config.record_rejections, flags=flags)
        return StepOutcome(ex.id, accepted, predicted_concept, idea, answer, predicted,
                           final, rationale, reflections, flags)

    def survey(self, stats: dict) -> dict[str, bool]:
        session = (f"{stats['n_items']} exercises, {stats['accept_fraction']:.0%} attempted, "
                   f"mean distance between exercise difficulty and your ability "
                   f"{stats['mean_gap']:.2f}, proficiency improved on some concept: "
                   f"{'yes' if stats['gain'] else 'no'}")
        prompt = self.templates["survey"].render(stats, profile=self._profile_text(), session=session)
        text = self._ask(prompt)
        out = {}
        for key in ("satisfaction", "aod", "gain"):
            m = re.search(rf"{key}\s*:\s*(yes|no)", text, re.IGNORECASE)
            out[key] = bool(m) and m.group(1).lower() == "yes"
        return out
