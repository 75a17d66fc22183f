"""End-to-end experiment pipelines built on the agent and CAT modules."""
from __future__ import annotations

import hashlib
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .agent import AgentConfig, LearnerAgent, StepOutcome, Truth
from .backends import LlmBackend, StubBackend, TraceWriter
from .cat import (
    ItemPool, ReplayResponder, make_selector, post_session_survey, run_session,
)
from .cognition import CalibrationConfig, IrtModel, calibrate, infer_ability, irt_prob, theta_grid
from .data import Dataset, Exercise, LearnerLog, ResponseRecord, split_chronological
from .metrics import (
    MetricsReport, SuccessRateComparison, acc_f1, corpus_rouge3, success_rate_distribution,
)
from .profile import LearnerProfile, TierConfig, compute_profile, random_profile, tierize
from .prompts import PromptTemplate

log = logging.getLogger(__name__)

# Values reported with GPT-3.5-turbo agents on the original corpus. Kept for
# side-by-side display only; the stub backend is not expected to match them.
REFERENCE = {
    "simulation": {"acc": 66.70, "f1": 79.84, "rouge3": 37.97},
    "knowledge_acc": 73.88,
    "survey": {"fsi": {"satisfaction": 39, "aod": 70, "gain": 48},
               "kli": {"satisfaction": 39, "aod": 66, "gain": 43},
               "maat": {"satisfaction": 42, "aod": 68, "gain": 45}},
    "improvement": {("fsi", 5): (80.11, 82.39), ("kli", 5): (79.45, 81.84),
                    ("maat", 5): (81.77, 81.97), ("fsi", 10): (81.10, 82.51),
                    ("kli", 10): (80.63, 82.82), ("maat", 10): (81.71, 81.88)},
}


def derive_seed(seed: int, *parts) -> int:
    """Independent 63-bit seed for (seed, parts...), stable across runs and platforms."""
    key = "\x1f".join([str(seed), *map(str, parts)]).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big") >> 1


def pmap(fn: Callable, items: Sequence, jobs: int = 1) -> list:
    """Ordered map, threaded when ``jobs > 1``."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


@dataclass
class Settings:
    """Everything an experiment needs besides the data."""

    agent: AgentConfig = field(default_factory=AgentConfig)
    tiers: TierConfig = field(default_factory=TierConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    concept_accuracy: float = 0.8
    backend: LlmBackend | None = None  # None -> one seeded stub per agent
    templates: dict[str, PromptTemplate] | None = None
    trace: TraceWriter | None = None
    grid_points: int = 81
    alpha: float = 0.5
    kli_points: int = 61
    jobs: int = 1

    def backend_for(self, seed: int) -> LlmBackend:
        if self.backend is not None:
            return self.backend
        return StubBackend(seed, self.concept_accuracy)

    def selector(self, name: str, seed: int):
        return make_selector(name, alpha=self.alpha, points=self.kli_points, seed=seed)


def build_agent(learner_id: str, profile: LearnerProfile, ds: Dataset, model: IrtModel,
                settings: Settings, seed: int, config: AgentConfig | None = None) -> LearnerAgent:
    return LearnerAgent(
        learner_id, profile, settings.backend_for(derive_seed(seed, learner_id, "backend")),
        model=model, concepts=ds.concepts, seed=derive_seed(seed, learner_id, "agent"),
        relations=ds.relations, config=config or settings.agent,
        templates=settings.templates, trace=settings.trace,
    )


def replay(agent: LearnerAgent, log: LearnerLog, ds: Dataset) -> None:
    for r in log.records:
        agent.observe(r, ds.exercises[r.exercise_id])


# ----------------------------------------------------------------- simulation


@dataclass
class LearnerPrediction:
    learner_id: str
    exercise_ids: list[str]
    truths: list[int]
    outcomes: list[StepOutcome]

    @property
    def labels(self) -> list[int]:
        return [o.final_label for o in self.outcomes]


@dataclass
class SimulationResult:
    predictions: list[LearnerPrediction]
    metrics: MetricsReport
    knowledge_acc: float
    success_rates: SuccessRateComparison
    model: IrtModel

    def report(self) -> dict:
        return {
            "metrics": self.metrics.to_dict(),
            "knowledge_acc": self.knowledge_acc,
            "success_rate_distribution": self.success_rates.to_dict(),
            "reference": {"simulation": REFERENCE["simulation"],
                          "knowledge_acc": REFERENCE["knowledge_acc"]},
        }


def run_simulation(ds: Dataset, settings: Settings, seed: int, ratio: float = 0.9,
                   learners: Sequence[str] | None = None) -> SimulationResult:
    """Chronological split, profile + memory from the training part, predict the rest.

    Exercises of the test part are sent to the agent one by one with ground
    truth available, so corrective reflection is active (unless zero-shot).
    """
    learners = list(learners or ds.logs)
    splits = {lid: split_chronological(ds.logs[lid], ratio) for lid in learners}
    train_ds = ds.with_logs({lid: tr for lid, (tr, _) in splits.items()})
    model = calibrate(train_ds, settings.calibration)

    def one(lid: str) -> LearnerPrediction:
        train, test = splits[lid]
        profile = compute_profile(train, ds, model.theta[lid], settings.tiers)
        agent = build_agent(lid, profile, ds, model, settings, seed)
        replay(agent, train, ds)
        outcomes = [
            agent.step(ds.exercises[r.exercise_id], Truth(ds.concept_of(r.exercise_id), r.correct))
            for r in test.records
        ]
        return LearnerPrediction(lid, test.exercise_ids, test.responses, outcomes)

    preds = pmap(one, learners, settings.jobs)
    return summarize_simulation(ds, preds, model)


def summarize_simulation(ds: Dataset, preds: Sequence[LearnerPrediction],
                         model: IrtModel) -> SimulationResult:
    labels = [y for p in preds for y in p.labels]
    truths = [y for p in preds for y in p.truths]
    if not labels:
        raise ValueError("no test records to evaluate; use a smaller split ratio")
    acc, f1 = acc_f1(labels, truths)
    rouge = corpus_rouge3([(p.labels, p.truths) for p in preds if p.truths])
    concept_hits = [o.predicted_concept == ds.concept_of(o.exercise_id)
                    for p in preds for o in p.outcomes]
    rates = success_rate_distribution(
        {p.learner_id: ds.logs[p.learner_id].responses for p in preds},
        {p.learner_id: p.labels for p in preds},
    )
    return SimulationResult(
        list(preds), MetricsReport(acc, f1, rouge, len(labels)),
        sum(concept_hits) / len(concept_hits), rates, model,
    )


def knowledge_prediction_eval(tasks: Iterable[tuple[LearnerAgent, Sequence[Exercise]]]) -> float:
    """Share of exercises whose concept the agent picks out of 1 true + 2 distractor candidates."""
    hits = total = 0
    for agent, exercises in tasks:
        for ex in exercises:
            hits += agent.identify_concept(ex) == ex.concept_id
            total += 1
    if not total:
        raise ValueError("no exercises to evaluate")
    return hits / total


# --------------------------------------------------------------- augmentation


@dataclass(frozen=True)
class AugmentedDataset:
    base: Dataset
    simulated: tuple[ResponseRecord, ...]

    def merge_into(self, target: Dataset) -> Dataset:
        if not self.simulated:
            return target
        logs = dict(target.logs)
        extra: dict[str, list[ResponseRecord]] = {}
        for r in self.simulated:
            extra.setdefault(r.learner_id, []).append(r)
        for lid, recs in extra.items():
            old = logs.get(lid)
            have = set(old.exercise_ids) if old else set()
            clash = [r.exercise_id for r in recs if r.exercise_id in have]
            if clash:
                raise ValueError(f"simulated record repeats exercise {clash[0]!r} for {lid!r}")
            logs[lid] = LearnerLog(lid, (old.records if old else ()) + tuple(recs))
        return target.with_logs(logs)

    def merged(self) -> Dataset:
        return self.merge_into(self.base)


def augment_dataset(ds: Dataset, agents: Mapping[str, LearnerAgent], k: int, seed: int,
                    jobs: int = 1) -> AugmentedDataset:
    """Let each agent answer ``k`` random exercises its learner has never seen."""
    if k < 0:
        raise ValueError("k must be >= 0")
    bank = sorted(ds.exercises)

    def one(lid: str) -> list[ResponseRecord]:
        agent = agents[lid]
        log_ = ds.logs.get(lid)
        seen = set(log_.exercise_ids) if log_ else set()
        seen |= agent.administered
        unseen = [e for e in bank if e not in seen]
        if len(unseen) < k:
            raise ValueError(f"learner {lid!r} has only {len(unseen)} unseen exercises, need {k}")
        chosen = random.Random(derive_seed(seed, lid, "augment")).sample(unseen, k)
        start = (log_.records[-1].step + 1) if log_ and log_.records else 0
        recs = []
        for j, eid in enumerate(chosen):
            out = agent.step(ds.exercises[eid])
            recs.append(ResponseRecord(lid, eid, out.final_label, start + j))
        return recs

    lids = sorted(agents)
    records = tuple(r for recs in pmap(one, lids, jobs) for r in recs)
    return AugmentedDataset(ds, records)


# ------------------------------------------------------- CAT with agents (survey)


@dataclass
class CatEvaluation:
    sessions: list  # CatSession
    survey_counts: dict[str, dict[str, int]]
    model: IrtModel

    def report(self) -> dict:
        return {"survey_counts": self.survey_counts, "sessions": len(self.sessions),
                "reference": REFERENCE["survey"]}


def pretrain_on_virtual_data(ds: Dataset, knowledge: IrtModel, settings: Settings, seed: int,
                             n_agents: int = 100, n_items: int = 30) -> IrtModel:
    """Calibrate an IRT model on answers produced by randomly initialised agents."""
    config = _zero_shot(settings.agent)
    bank = sorted(ds.exercises)
    concepts = sorted(ds.concepts)

    def one(j: int) -> LearnerLog:
        lid = f"virtual{j:04d}"
        profile = random_profile(derive_seed(seed, lid, "profile"), concepts, settings.tiers)
        agent = build_agent(lid, profile, ds, knowledge, settings, seed, config)
        chosen = random.Random(derive_seed(seed, lid, "items")).sample(bank, min(n_items, len(bank)))
        recs = [ResponseRecord(lid, e, agent.step(ds.exercises[e]).final_label, i)
                for i, e in enumerate(chosen)]
        return LearnerLog(lid, tuple(recs))

    logs = pmap(one, list(range(n_agents)), settings.jobs)
    return calibrate(ds.with_logs({lg.learner_id: lg for lg in logs}), settings.calibration)


def _zero_shot(cfg: AgentConfig) -> AgentConfig:
    from dataclasses import replace
    return replace(cfg, zero_shot=True)


def run_cat_evaluation(ds: Dataset, settings: Settings, seed: int,
                       selectors: Sequence[str] = ("fsi", "kli", "maat"), rounds: int = 10,
                       n_agents: int = 100, zero_shot: bool = False,
                       knowledge: IrtModel | None = None,
                       pretrain_agents: int = 100, pretrain_items: int = 30) -> CatEvaluation:
    """Each agent takes one adaptive test per selector, then rates it.

    ``knowledge`` holds the item parameters the agents themselves reason with
    (the generator's truth for synthetic data); it defaults to a calibration
    on ``ds``. In zero-shot mode agents get random profiles and the CAT model
    is pretrained on virtual data from other random agents; otherwise agents
    mirror the first ``n_agents`` learners and the CAT model is fit on ``ds``.
    """
    fitted = calibrate(ds, settings.calibration)
    knowledge = knowledge or fitted
    grid = theta_grid(settings.grid_points)
    concepts = sorted(ds.concepts)
    if zero_shot:
        cat_model = pretrain_on_virtual_data(ds, knowledge, settings, derive_seed(seed, "pretrain"),
                                             pretrain_agents, pretrain_items)
        learner_ids = [f"agent{j:04d}" for j in range(n_agents)]
        config = _zero_shot(settings.agent)
    else:
        cat_model = fitted
        learner_ids = list(ds.logs)[:n_agents]
        config = settings.agent

    def make(lid: str) -> LearnerAgent:
        if zero_shot:
            profile = random_profile(derive_seed(seed, lid, "profile"), concepts, settings.tiers)
            agent = build_agent(lid, profile, ds, knowledge, settings, seed, config)
        else:
            lg = ds.logs[lid]
            profile = compute_profile(lg, ds, infer_ability(knowledge, lg), settings.tiers)
            agent = build_agent(lid, profile, ds, knowledge, settings, seed, config)
            replay(agent, lg, ds)
        return agent

    def one(task: tuple[str, str]):
        name, lid = task
        agent = make(lid)
        pool_ids = [e for e in sorted(ds.exercises) if e not in agent.administered]
        pool = ItemPool.from_model([ds.exercises[e] for e in pool_ids], cat_model)
        sel = settings.selector(name, derive_seed(seed, lid, name))
        session = run_session(agent, sel, rounds, pool, ds.exercises, grid)
        post_session_survey(agent, session, pool)
        return session

    tasks = [(name, lid) for name in selectors for lid in learner_ids]
    sessions = pmap(one, tasks, settings.jobs)
    counts = {name: {"satisfaction": 0, "aod": 0, "gain": 0} for name in selectors}
    for s in sessions:
        for key, flag in s.survey.to_dict().items():
            counts[s.selector][key] += int(flag)
    return CatEvaluation(sessions, counts, cat_model)


# ------------------------------------------------ augmentation -> CAT improvement


@dataclass
class ImprovementCell:
    selector: str
    length: int
    f1_base: float
    f1_augmented: float

    @property
    def imp(self) -> float:
        return self.f1_augmented - self.f1_base

    def to_dict(self) -> dict:
        return {"selector": self.selector, "length": self.length, "f1_base": self.f1_base,
                "f1_augmented": self.f1_augmented, "imp": self.imp}


@dataclass
class ImprovementResult:
    cells: list[ImprovementCell]
    train_learners: list[str]
    test_learners: list[str]
    n_simulated: int

    def report(self) -> dict:
        return {
            "cells": [c.to_dict() for c in self.cells],
            "train_learners": len(self.train_learners),
            "test_learners": len(self.test_learners),
            "simulated_records": self.n_simulated,
            "reference": [
                {"selector": s, "length": n, "f1_base": a, "f1_augmented": b}
                for (s, n), (a, b) in REFERENCE["improvement"].items()
            ],
        }


def cat_prediction_f1(model: IrtModel, ds: Dataset, learners: Sequence[str], selector: str,
                      length: int, settings: Settings, seed: int) -> float:
    """F1 (in %) of predicting each learner's untested responses after a CAT of ``length`` items.

    The test draws from the learner's own answered exercises and replays the
    recorded responses; the final ability estimate then predicts the rest.
    """
    grid = theta_grid(settings.grid_points)
    preds, truths = [], []
    for lid in learners:
        lg = ds.logs[lid]
        if len(lg) <= length:
            continue
        answers = dict(zip(lg.exercise_ids, lg.responses))
        pool = ItemPool.from_model([ds.exercises[e] for e in lg.exercise_ids], model)
        sel = settings.selector(selector, derive_seed(seed, lid, selector, length))
        session = run_session(ReplayResponder(lid, answers), sel, length, pool, ds.exercises, grid)
        rest = [e for e in lg.exercise_ids if e not in set(session.administered)]
        a, b = model.item_params(rest)
        preds.extend((irt_prob(session.theta, a, b) >= 0.5).astype(int).tolist())
        truths.extend(answers[e] for e in rest)
    if not preds:
        raise ValueError(f"no held-out learner has more than {length} records")
    return 100.0 * acc_f1(preds, truths)[1]


def split_learners(ds: Dataset, train_fraction: float, seed: int) -> tuple[list[str], list[str]]:
    lids = sorted(ds.logs)
    random.Random(derive_seed(seed, "learner-split")).shuffle(lids)
    cut = int(round(train_fraction * len(lids)))
    return sorted(lids[:cut]), sorted(lids[cut:])


def cat_improvement_experiment(ds: Dataset, settings: Settings, seed: int,
                               selectors: Sequence[str] = ("fsi", "kli", "maat"),
                               lengths: Sequence[int] = (5, 10), k: int = 20,
                               train_fraction: float = 0.6,
                               knowledge: IrtModel | None = None) -> ImprovementResult:
    """Does data simulated for held-out learners improve CAT-based prediction?

    Train IRT on a learner-level split, let agents of the held-out learners
    answer ``k`` unseen exercises each, retrain on train + simulated records,
    then compare response-prediction F1 after CAT under both models.
    ``knowledge`` is the item knowledge agents reason with (defaults to the
    base model).
    """
    train_ids, test_ids = split_learners(ds, train_fraction, seed)
    train_ds = ds.subset(train_ids)
    base = calibrate(train_ds, settings.calibration)
    knowledge = knowledge or base

    def make(lid: str) -> LearnerAgent:
        lg = ds.logs[lid]
        profile = compute_profile(lg, ds, infer_ability(knowledge, lg), settings.tiers)
        agent = build_agent(lid, profile, ds, knowledge, settings, seed)
        replay(agent, lg, ds)
        return agent

    agents = dict(zip(test_ids, pmap(make, test_ids, settings.jobs)))
    aug = augment_dataset(ds.subset(test_ids), agents, k, seed, settings.jobs)
    augmented_ds = aug.merge_into(train_ds)
    augmented = base if augmented_ds is train_ds else calibrate(augmented_ds, settings.calibration)

    cells = []
    for length in lengths:
        for name in selectors:
            f_base = cat_prediction_f1(base, ds, test_ids, name, length, settings, seed)
            f_aug = cat_prediction_f1(augmented, ds, test_ids, name, length, settings, seed)
            cells.append(ImprovementCell(name, length, f_base, f_aug))
    return ImprovementResult(cells, train_ids, test_ids, len(aug.simulated))


# ------------------------------------------------------------ CAT convergence


def cat_convergence(ds: Dataset, truth: IrtModel, settings: Settings, seed: int,
                    selectors: Sequence[str] = ("fsi", "random"), rounds: int = 10,
                    n_learners: int | None = None) -> dict[str, float]:
    """Mean ``|theta_hat - theta_true|`` after ``rounds`` items, per selector.

    Each learner is a fresh agent whose profile ability is its generating
    theta; item parameters are the generator's, so only the item choice differs
    between selectors.
    """
    learner_ids = sorted(ds.logs)[:n_learners]
    pool = ItemPool.from_model(ds.exercises.values(), truth)
    grid = theta_grid(settings.grid_points)
    config = _zero_shot(settings.agent)
    concepts = sorted(ds.concepts)

    def one(task: tuple[str, str]) -> float:
        name, lid = task
        profile = random_profile(derive_seed(seed, lid, "profile"), concepts, settings.tiers)
        profile = LearnerProfile(profile.activity, profile.diversity, profile.success_rate,
                                 profile.preference, truth.theta[lid],
                                 {**profile.tiers, "ability": tierize(truth.theta[lid],
                                                                      settings.tiers.ability_bounds)})
        agent = build_agent(lid, profile, ds, truth, settings, seed, config)
        sel = settings.selector(name, derive_seed(seed, lid, name, "convergence"))
        session = run_session(agent, sel, rounds, pool, ds.exercises, grid)
        return abs(session.theta - truth.theta[lid])

    out = {}
    for name in selectors:
        errors = pmap(one, [(name, lid) for lid in learner_ids], settings.jobs)
        out[name] = float(np.mean(errors))
    return out
