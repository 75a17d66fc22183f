"""Learner profiles: practice-style statistics, tiers and the ability factor."""
from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .data import Dataset, LearnerLog

TIERS = ("low", "medium", "high")
TIER_RANK = {t: i for i, t in enumerate(TIERS)}

RATIO_BOUNDS = (1 / 3, 2 / 3)
ABILITY_BOUNDS = (-0.5, 0.5)


def tierize(value: float, bounds: tuple[float, float] = RATIO_BOUNDS) -> str:
    t1, t2 = bounds
    if not t1 < t2:
        raise ValueError(f"tier bounds must be increasing, got {bounds}")
    if value < t1:
        return "low"
    if value < t2:
        return "medium"
    return "high"


@dataclass(frozen=True)
class TierConfig:
    ratio_bounds: tuple[float, float] = RATIO_BOUNDS
    ability_bounds: tuple[float, float] = ABILITY_BOUNDS
    preference_size: int = 3


@dataclass(frozen=True)
class LearnerProfile:
    activity: float
    diversity: float
    success_rate: float
    preference: tuple[str, ...]
    ability: float
    tiers: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "activity": self.activity,
            "diversity": self.diversity,
            "success_rate": self.success_rate,
            "preference": list(self.preference),
            "ability": self.ability,
            "tiers": dict(self.tiers),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LearnerProfile":
        return cls(d["activity"], d["diversity"], d["success_rate"],
                   tuple(d["preference"]), d["ability"], dict(d["tiers"]))


def _tiers(activity, diversity, success_rate, ability, cfg: TierConfig) -> dict[str, str]:
    return {
        "activity": tierize(activity, cfg.ratio_bounds),
        "diversity": tierize(diversity, cfg.ratio_bounds),
        "success_rate": tierize(success_rate, cfg.ratio_bounds),
        "ability": tierize(ability, cfg.ability_bounds),
    }


def compute_profile(log: LearnerLog, ds: Dataset, ability: float,
                    cfg: TierConfig = TierConfig()) -> LearnerProfile:
    """Statistics of one learner's practice record.

    activity = |log| / |E|, diversity = |K_u| / |K|, success_rate = mean
    correctness (0 for an empty log). Preference lists the most practiced
    concepts, ties broken by concept id.
    """
    n = len(log)
    counts = Counter(ds.concept_of(r.exercise_id) for r in log.records)
    activity = n / len(ds.exercises) if ds.exercises else 0.0
    diversity = len(counts) / len(ds.concepts) if ds.concepts else 0.0
    success_rate = sum(r.correct for r in log.records) / n if n else 0.0
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    preference = tuple(k for k, _ in ranked[: cfg.preference_size])
    return LearnerProfile(
        activity, diversity, success_rate, preference, float(ability),
        _tiers(activity, diversity, success_rate, ability, cfg),
    )


def random_profile(seed: int, concepts: Sequence[str],
                   cfg: TierConfig = TierConfig()) -> LearnerProfile:
    """Zero-shot profile for a learner without history. Deterministic in ``seed``."""
    rng = random.Random(seed)
    activity, diversity, success_rate = rng.random(), rng.random(), rng.random()
    ability = rng.gauss(0.0, 1.0)
    pool = sorted(concepts)
    preference = tuple(rng.sample(pool, min(cfg.preference_size, len(pool))))
    return LearnerProfile(
        activity, diversity, success_rate, preference, ability,
        _tiers(activity, diversity, success_rate, ability, cfg),
    )
