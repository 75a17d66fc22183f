"""Prediction and distribution-similarity metrics."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

N_BINS = 10


@dataclass(frozen=True)
class MetricsReport:
    acc: float
    f1: float
    rouge3: float
    n: int

    def to_dict(self) -> dict:
        return {"acc": self.acc, "f1": self.f1, "rouge3": self.rouge3, "n": self.n}


def acc_f1(preds: Sequence[int], truths: Sequence[int]) -> tuple[float, float]:
    """Accuracy and F1 of the positive (correct-answer) class."""
    if len(preds) != len(truths):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(truths)} truths")
    if not preds:
        raise ValueError("need at least one prediction")
    tp = sum(1 for p, t in zip(preds, truths) if p == 1 and t == 1)
    fp = sum(1 for p, t in zip(preds, truths) if p == 1 and t == 0)
    fn = sum(1 for p, t in zip(preds, truths) if p == 0 and t == 1)
    acc = sum(1 for p, t in zip(preds, truths) if p == t) / len(preds)
    denom = 2 * tp + fp + fn
    f1 = 2 * tp / denom if denom else 0.0
    return acc, f1


def ngrams(seq: Sequence, n: int) -> Counter:
    return Counter(tuple(seq[i:i + n]) for i in range(len(seq) - n + 1))


def rouge_n(sim: Sequence, real: Sequence, n: int = 3) -> float:
    """ROUGE-N F-measure with clipped n-gram counts; 0 when either side has no n-gram."""
    if len(sim) < n or len(real) < n:
        return 0.0
    s, r = ngrams(list(sim), n), ngrams(list(real), n)
    overlap = sum((s & r).values())
    if overlap == 0:
        return 0.0
    precision = overlap / sum(s.values())
    recall = overlap / sum(r.values())
    return 2 * precision * recall / (precision + recall)


def rouge3(sim: Sequence[int], real: Sequence[int]) -> float:
    return rouge_n(sim, real, 3)


def corpus_rouge3(pairs: Sequence[tuple[Sequence[int], Sequence[int]]]) -> float:
    """Mean per-learner ROUGE-3 over (simulated, real) response sequences."""
    if not pairs:
        return 0.0
    return float(np.mean([rouge3(s, r) for s, r in pairs]))


def success_histogram(rates: Sequence[float], bins: int = N_BINS) -> np.ndarray:
    counts, _ = np.histogram(np.asarray(rates, float), bins=bins, range=(0.0, 1.0))
    total = counts.sum()
    return counts / total if total else counts.astype(float)


@dataclass(frozen=True)
class SuccessRateComparison:
    real: np.ndarray
    simulated: np.ndarray
    l1: float

    def to_dict(self) -> dict:
        return {"real": self.real.tolist(), "simulated": self.simulated.tolist(), "l1": self.l1}


def success_rate_distribution(real_logs: Mapping[str, Sequence[int]],
                              sim_labels: Mapping[str, Sequence[int]],
                              bins: int = N_BINS) -> SuccessRateComparison:
    """Compare per-learner success-rate histograms.

    ``real_logs`` holds each learner's full real response sequence; the
    simulated labels overwrite the tail of that sequence (the test portion).
    """
    real_rates, sim_rates = [], []
    for lid, real in real_logs.items():
        real = list(real)
        if not real:
            continue
        sim = list(sim_labels.get(lid, []))
        if len(sim) > len(real):
            raise ValueError(f"learner {lid!r} has more simulated labels than real responses")
        replaced = real[: len(real) - len(sim)] + sim
        real_rates.append(sum(real) / len(real))
        sim_rates.append(sum(replaced) / len(replaced))
    h_real = success_histogram(real_rates, bins)
    h_sim = success_histogram(sim_rates, bins)
    return SuccessRateComparison(h_real, h_sim, float(np.abs(h_real - h_sim).sum()))
