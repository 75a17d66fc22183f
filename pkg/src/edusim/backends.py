"""Text-generation backends.

A backend has one capability: ``complete(prompt, params) -> str``. The
:class:`StubBackend` answers from the structured ``prompt.meta`` with seeded
rules so every pipeline can run offline and reproducibly. :class:`HttpBackend`
talks to an OpenAI-compatible chat-completions endpoint.
"""
from __future__ import annotations

import json
import logging
import os
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import httpx

from .cognition import irt_prob
from .profile import TIER_RANK
from .prompts import Prompt

log = logging.getLogger(__name__)

API_KEY_ENV = "EDUSIM_API_KEY"


class BackendError(RuntimeError):
    pass


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.0
    max_tokens: int = 256


class LlmBackend(Protocol):
    def complete(self, prompt: Prompt, params: GenerationParams) -> str: ...


def reject_by_tier_gap(difficulty: str, ability: str, proficiency: str) -> bool:
    """True when the item is at least two tiers above the learner's best tier."""
    best = max(TIER_RANK[ability], TIER_RANK[proficiency])
    return TIER_RANK[difficulty] - best >= 2


class StubBackend:
    """Deterministic stand-in for a language model.

    * accept: reject iff the difficulty tier exceeds max(ability, proficiency)
      tier by two or more levels
    * identify: the true concept with probability ``concept_accuracy``,
      otherwise another candidate
    * solve_predict: "yes" with probability ``irt_prob(theta, a, b)``
    * summary / survey: templated text from the supplied facts

    One instance should serve one agent; its random stream is part of that
    agent's reproducible trajectory.
    """

    def __init__(self, seed: int = 0, concept_accuracy: float = 0.8):
        if not 0 <= concept_accuracy <= 1:
            raise ValueError("concept_accuracy must lie in [0, 1]")
        self.seed = seed
        self.concept_accuracy = concept_accuracy
        self._rng = random.Random(seed)
        self._lock = threading.Lock()

    def complete(self, prompt: Prompt, params: GenerationParams = GenerationParams()) -> str:
        handler = getattr(self, f"_{prompt.name}", None)
        if handler is None:
            raise BackendError(f"stub backend has no rule for prompt {prompt.name!r}")
        with self._lock:
            return handler(prompt.meta)

    def _accept(self, m):
        if reject_by_tier_gap(m["difficulty_tier"], m["ability_tier"], m["proficiency_tier"]):
            return (f"REJECT: a {m['difficulty_tier']}-difficulty exercise is too far above "
                    f"my {m['ability_tier']} ability.")
        return "ACCEPT: the difficulty looks manageable."

    def _identify(self, m):
        truth, candidates = m["truth"], m["candidates"]
        if self._rng.random() < self.concept_accuracy or len(candidates) < 2:
            return truth
        return self._rng.choice([c for c in candidates if c != truth])

    def _solve_idea(self, m):
        return f"Recall the rules of concept {m['concept']} and apply them step by step."

    def _solve_answer(self, m):
        return f"Worked answer for exercise {m['exercise_id']} following the idea above."

    def _solve_predict(self, m):
        p = irt_prob(m["theta"], m["a"], m["b"])
        return "yes" if self._rng.random() < p else "no"

    def _summary(self, m):
        recent = ", ".join(m["recent_concepts"]) or "none"
        lines = [f"Recent concepts: {recent}. Correct {m['successes']} of {m['attempts']} recent exercises."]
        if m["reinforced_concepts"]:
            lines.append("Well practiced: " + ", ".join(m["reinforced_concepts"]) + ".")
        lines.extend(m.get("corrections", []))
        return "\n".join(lines)

    def _corrective(self, m):
        return f"I should behave like the real student, who gave {m['truth']} rather than {m['predicted']}."

    def _survey(self, m):
        def yn(flag):
            return "yes" if flag else "no"
        return (f"satisfaction: {yn(m['accept_fraction'] >= 0.8)}\n"
                f"aod: {yn(m['mean_gap'] <= 1.0)}\n"
                f"gain: {yn(m['gain'])}")


class HttpBackend:
    """OpenAI-compatible chat-completions client with retries and a concurrency cap."""

    def __init__(self, base_url: str, model: str, api_key: str | None = None, *,
                 timeout: float = 60.0, max_retries: int = 2, backoff: float = 1.0,
                 max_in_flight: int = 4, client: httpx.Client | None = None):
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.max_retries = max_retries
        self.backoff = backoff
        self._client = client or httpx.Client(timeout=timeout)
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def complete(self, prompt: Prompt, params: GenerationParams = GenerationParams()) -> str:
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt.text}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        last_exc: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                with self._slots:
                    resp = self._client.post(self.url, json=body, headers=headers)
            except httpx.TransportError as exc:
                last_exc = exc
                log.warning("backend transport error (attempt %d): %s", attempt + 1, exc)
                continue
            if resp.status_code >= 500 or resp.status_code == 429:
                last_exc = BackendError(f"HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise BackendError(f"unexpected response body: {resp.text[:200]}") from exc
        raise BackendError(f"backend unreachable after {self.max_retries + 1} attempts: {last_exc}")


class TraceWriter:
    """Appends one JSON line per backend call. Safe to share between threads."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def write(self, **record) -> None:
        line = json.dumps(record, ensure_ascii=False, sort_keys=True)
        with self._lock, self.path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")
