"""Adaptive-testing environment: item selection, ability updates, session loop, survey."""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Protocol, Sequence

import numpy as np

from .cognition import IrtModel, eap, fisher_information, irt_prob, theta_grid
from .data import Exercise

KLI_POINTS = 61


class PoolExhausted(RuntimeError):
    def __init__(self, message: str, session: "CatSession | None" = None):
        super().__init__(message)
        self.session = session


@dataclass(frozen=True)
class ItemPool:
    """Calibrated items, kept sorted by id so argmax ties resolve to the lowest id."""

    ids: tuple[str, ...]
    a: np.ndarray
    b: np.ndarray
    concepts: tuple[str, ...]

    def __post_init__(self):
        if list(self.ids) != sorted(self.ids):
            raise ValueError("pool ids must be sorted")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("pool ids must be unique")

    @classmethod
    def build(cls, ids: Iterable[str], a, b, concepts) -> "ItemPool":
        rows = sorted(zip(ids, np.asarray(a, float), np.asarray(b, float), concepts))
        if not rows:
            return cls((), np.empty(0), np.empty(0), ())
        ids, a, b, concepts = zip(*rows)
        return cls(tuple(ids), np.array(a), np.array(b), tuple(concepts))

    @classmethod
    def from_model(cls, exercises: Iterable[Exercise], model: IrtModel) -> "ItemPool":
        exercises = list(exercises)
        a, b = model.item_params([e.id for e in exercises])
        return cls.build([e.id for e in exercises], a, b, [e.concept_id for e in exercises])

    def __len__(self) -> int:
        return len(self.ids)

    def index(self, exercise_id: str) -> int:
        return self.ids.index(exercise_id)

    def remaining_mask(self, administered: Iterable[str]) -> np.ndarray:
        done = set(administered)
        mask = np.array([i not in done for i in self.ids], dtype=bool)
        if not mask.any():
            raise PoolExhausted("no items left in the pool")
        return mask


def _argmax_remaining(scores: np.ndarray, mask: np.ndarray, ids: Sequence[str]) -> str:
    scores = np.where(mask, scores, -np.inf)
    return ids[int(np.argmax(scores))]  # first maximum == lowest id


# ----------------------------------------------------------------- estimation


def eap_estimate(responses: Sequence[int], a, b, grid: np.ndarray | None = None,
                 prior: np.ndarray | None = None) -> float:
    """Posterior-mean ability for the responses given so far (0 with none)."""
    return eap(a, b, responses, grid, prior)


# ------------------------------------------------------------------ selectors


def fsi_scores(theta: float, pool: ItemPool) -> np.ndarray:
    return fisher_information(theta, pool.a, pool.b)


def fsi_select(theta: float, pool: ItemPool, administered: Iterable[str]) -> str:
    """Maximum Fisher information ``a^2 p (1 - p)`` at the current estimate."""
    mask = pool.remaining_mask(administered)
    return _argmax_remaining(fsi_scores(theta, pool), mask, pool.ids)


def bernoulli_kl(p, q):
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    q = np.clip(q, 1e-12, 1.0 - 1e-12)
    return p * np.log(p / q) + (1.0 - p) * np.log((1.0 - p) / (1.0 - q))


def kli_delta(n: int) -> float:
    return 3.0 / np.sqrt(max(n, 1))


def kli_scores(theta: float, pool: ItemPool, n: int, points: int = KLI_POINTS) -> np.ndarray:
    """KL index: integral of KL(p(theta) || p(t)) over t in theta +/- 3/sqrt(n), trapezoid rule."""
    delta = kli_delta(n)
    t = np.linspace(theta - delta, theta + delta, points)
    p_hat = irt_prob(theta, pool.a, pool.b)[:, None]
    p_t = irt_prob(t[None, :], pool.a[:, None], pool.b[:, None])
    integrand = bernoulli_kl(p_hat, p_t)
    h = t[1] - t[0]
    return h * (integrand.sum(axis=1) - 0.5 * (integrand[:, 0] + integrand[:, -1]))


def kli_select(theta: float, pool: ItemPool, administered: Iterable[str], n: int,
               points: int = KLI_POINTS) -> str:
    mask = pool.remaining_mask(administered)
    return _argmax_remaining(kli_scores(theta, pool, n, points), mask, pool.ids)


def maat_scores(theta: float, pool: ItemPool, mask: np.ndarray, covered: Iterable[str],
                alpha: float) -> np.ndarray:
    info = fsi_scores(theta, pool)
    top = info[mask].max()
    quality = info / top if top > 0 else np.zeros_like(info)
    covered = set(covered)
    gain = np.array([c not in covered for c in pool.concepts], dtype=float)
    return alpha * quality + (1.0 - alpha) * gain


def maat_select(theta: float, pool: ItemPool, administered: Iterable[str],
                covered_concepts: Iterable[str], alpha: float = 0.5) -> str:
    """Blend of normalised Fisher information and new-concept coverage."""
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    mask = pool.remaining_mask(administered)
    return _argmax_remaining(maat_scores(theta, pool, mask, covered_concepts, alpha), mask, pool.ids)


# ----------------------------------------------------------- selector registry


class Selector(Protocol):
    name: str

    def __call__(self, theta: float, pool: ItemPool, session: "CatSession") -> str: ...


SELECTORS: dict[str, Callable[..., Selector]] = {}


def register_selector(name: str):
    """Register a selector factory. Factories accept keyword parameters (alpha, seed, ...)."""
    def deco(factory):
        SELECTORS[name] = factory
        return factory
    return deco


def make_selector(name: str, **params) -> Selector:
    try:
        factory = SELECTORS[name]
    except KeyError:
        raise KeyError(f"unknown selector {name!r}; registered: {', '.join(sorted(SELECTORS))}") from None
    return factory(**params)


@dataclass
class _Fn:
    name: str
    fn: Callable

    def __call__(self, theta, pool, session):
        return self.fn(theta, pool, session)


@register_selector("fsi")
def _fsi(**_):
    return _Fn("fsi", lambda th, pool, s: fsi_select(th, pool, s.administered))


@register_selector("kli")
def _kli(points: int = KLI_POINTS, **_):
    return _Fn("kli", lambda th, pool, s: kli_select(th, pool, s.administered, len(s.administered), points))


@register_selector("maat")
def _maat(alpha: float = 0.5, **_):
    return _Fn("maat", lambda th, pool, s: maat_select(
        th, pool, s.administered, s.covered_concepts(pool), alpha))


@register_selector("random")
def _random(seed: int = 0, **_):
    rng = random.Random(seed)

    def pick(th, pool, s):
        mask = pool.remaining_mask(s.administered)
        return rng.choice([i for i, m in zip(pool.ids, mask) if m])
    return _Fn("random", pick)


# -------------------------------------------------------------------- session


@dataclass
class SurveyResult:
    satisfaction: bool
    aod: bool
    gain: bool

    def to_dict(self) -> dict:
        return {"satisfaction": self.satisfaction, "aod": self.aod, "gain": self.gain}


@dataclass
class CatSession:
    learner_id: str
    selector: str
    rounds: int
    administered: list[str] = field(default_factory=list)
    responses: list[int] = field(default_factory=list)
    accepted: list[bool] = field(default_factory=list)
    theta_trajectory: list[float] = field(default_factory=list)
    proficiency_before: dict[str, float] = field(default_factory=dict)
    survey: SurveyResult | None = None

    def covered_concepts(self, pool: ItemPool) -> set[str]:
        return {pool.concepts[pool.index(e)] for e in self.administered}

    @property
    def theta(self) -> float:
        return self.theta_trajectory[-1] if self.theta_trajectory else 0.0

    def to_dict(self) -> dict:
        return {
            "learner_id": self.learner_id,
            "selector": self.selector,
            "rounds": self.rounds,
            "administered": self.administered,
            "responses": self.responses,
            "accepted": self.accepted,
            "theta_trajectory": self.theta_trajectory,
            "survey": self.survey.to_dict() if self.survey else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


class Responder(Protocol):
    """Anything that answers an exercise: a learner agent or a log replay."""

    learner_id: str

    def step(self, ex: Exercise): ...


@dataclass
class ReplayResponder:
    """Answers with a learner's recorded responses (used to evaluate CAT on real logs)."""

    learner_id: str
    answers: Mapping[str, int]

    def step(self, ex: Exercise):
        return _Replayed(int(self.answers[ex.id]))


@dataclass
class _Replayed:
    final_label: int
    accepted: bool = True


def run_session(agent: Responder, selector: Selector, rounds: int, pool: ItemPool,
                exercises: Mapping[str, Exercise], grid: np.ndarray | None = None) -> CatSession:
    """Select, ask, re-estimate; one item per round. Rejections count as incorrect."""
    if rounds < 0:
        raise ValueError("rounds must be >= 0")
    grid = theta_grid() if grid is None else grid
    session = CatSession(agent.learner_id, getattr(selector, "name", str(selector)), rounds)
    prof = getattr(agent, "proficiency", None)
    if prof is not None:
        session.proficiency_before = prof.snapshot()
    for _ in range(rounds):
        try:
            item = selector(session.theta, pool, session)
        except PoolExhausted as exc:
            raise PoolExhausted(
                f"pool exhausted after {len(session.administered)} of {rounds} rounds", session
            ) from exc
        if item in session.administered:
            raise RuntimeError(f"selector {session.selector!r} repeated item {item!r}")
        outcome = agent.step(exercises[item])
        session.administered.append(item)
        session.responses.append(int(outcome.final_label))
        session.accepted.append(bool(outcome.accepted))
        idx = [pool.index(e) for e in session.administered]
        session.theta_trajectory.append(
            eap_estimate(session.responses, pool.a[idx], pool.b[idx], grid))
    return session


def survey_stats(agent, session: CatSession, pool: ItemPool) -> dict:
    n = len(session.administered)
    idx = [pool.index(e) for e in session.administered]
    theta = agent.profile.ability
    mean_gap = float(np.mean(np.abs(pool.b[idx] - theta))) if n else 0.0
    after = agent.proficiency
    gain = any(
        after.get(c) > session.proficiency_before.get(c, after.default)
        for c in {pool.concepts[i] for i in idx}
    )
    return {
        "n_items": n,
        "accept_fraction": (sum(session.accepted) / n) if n else 0.0,
        "mean_gap": mean_gap,
        "gain": gain,
    }


def post_session_survey(agent, session: CatSession, pool: ItemPool) -> SurveyResult:
    """Ask the agent to rate the finished session (satisfaction, difficulty, gain)."""
    answers = agent.survey(survey_stats(agent, session, pool))
    session.survey = SurveyResult(**answers)
    return session.survey
