"""Cognitive tools used by the agents: a 2PL IRT model and a proficiency tracker."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data import Dataset, LearnerLog
from .profile import RATIO_BOUNDS, tierize

log = logging.getLogger(__name__)

GRID_MIN, GRID_MAX, GRID_POINTS = -4.0, 4.0, 81


def softplus(z):
    """``log(1 + exp(z))`` without overflow; faster than ``np.logaddexp(0, z)``."""
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def irt_prob(theta, a, b):
    """2PL success probability ``1 / (1 + exp(-a (theta - b)))``; broadcasts."""
    z = np.multiply(a, np.subtract(theta, b), dtype=float)
    # stable for large |z|
    ez = np.exp(-np.abs(z))
    out = np.where(z >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))
    return float(out) if np.ndim(out) == 0 else out


def fisher_information(theta, a, b):
    p = irt_prob(theta, a, b)
    return np.square(a) * p * (1.0 - p)


@dataclass
class IrtModel:
    theta: dict[str, float] = field(default_factory=dict)
    a: dict[str, float] = field(default_factory=dict)
    b: dict[str, float] = field(default_factory=dict)
    history: list[float] = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        bad = [k for k, v in self.a.items() if not v > 0]
        if bad:
            raise ValueError(f"discrimination must be positive for items {bad[:5]}")

    def item_params(self, exercise_ids: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        missing = [e for e in exercise_ids if e not in self.a or e not in self.b]
        if missing:
            raise KeyError(f"no IRT parameters for exercise(s) {missing[:5]}")
        return (np.array([self.a[e] for e in exercise_ids], dtype=float),
                np.array([self.b[e] for e in exercise_ids], dtype=float))

    def prob(self, learner_id: str, exercise_id: str) -> float:
        return irt_prob(self.theta[learner_id], self.a[exercise_id], self.b[exercise_id])

    def to_dict(self) -> dict:
        return {"theta": self.theta, "a": self.a, "b": self.b}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "IrtModel":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(theta=d.get("theta", {}), a=d["a"], b=d["b"])


# ----------------------------------------------------------------- calibration


@dataclass(frozen=True)
class CalibrationConfig:
    learning_rate: float = 1.0
    epochs: int = 500
    l2: float = 0.01
    tol: float = 1e-6


@dataclass(frozen=True)
class ResponseArrays:
    """Flat index form of a dataset used by the calibration objective."""

    learner_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    u: np.ndarray
    i: np.ndarray
    y: np.ndarray

    @classmethod
    def from_dataset(cls, ds: Dataset) -> "ResponseArrays":
        learner_ids = tuple(ds.logs)
        item_ids = tuple(ds.exercises)
        lidx = {k: n for n, k in enumerate(learner_ids)}
        iidx = {k: n for n, k in enumerate(item_ids)}
        u, i, y = [], [], []
        for lid, lg in ds.logs.items():
            for r in lg.records:
                u.append(lidx[lid])
                i.append(iidx[r.exercise_id])
                y.append(r.correct)
        return cls(learner_ids, item_ids, np.array(u, dtype=np.intp),
                   np.array(i, dtype=np.intp), np.array(y, dtype=float))

    @property
    def n_params(self) -> int:
        return len(self.learner_ids) + 2 * len(self.item_ids)

    def unpack(self, x: np.ndarray):
        nl, ni = len(self.learner_ids), len(self.item_ids)
        return x[:nl], x[nl:nl + ni], x[nl + ni:]


def objective(x: np.ndarray, data: ResponseArrays, l2: float,
              curvature: bool = False):
    """Penalised log-likelihood and its gradient.

    Parameters are packed as ``[theta, log_a, b]``; ``a = exp(log_a)`` keeps the
    discrimination positive. The penalty ``l2/2 * (|theta|^2 + |b|^2 + |a - 1|^2)``
    acts on the natural scale so perfectly separated items keep a finite slope.
    With ``curvature=True`` a positive diagonal curvature estimate is returned too.
    """
    theta, log_a, b = data.unpack(x)
    with np.errstate(over="ignore", invalid="ignore"):
        a = np.exp(log_a)
        ai = a[data.i]
        z = ai * (theta[data.u] - b[data.i])
        # log(1-p) = -softplus(z) and log p = z - softplus(z); p = 1 - exp(-softplus(z))
        sp = softplus(z)
        ll = -np.sum(sp - data.y * z)
        p = -np.expm1(-sp)
        resid = data.y - p
        nl, ni = len(data.learner_ids), len(data.item_ids)
        g_theta = np.bincount(data.u, weights=resid * ai, minlength=nl) - l2 * theta
        g_loga = np.bincount(data.i, weights=resid * z, minlength=ni) - l2 * (a - 1.0) * a
        g_b = -np.bincount(data.i, weights=resid * ai, minlength=ni) - l2 * b
        penalty = 0.5 * l2 * (np.dot(theta, theta) + np.dot(b, b) + np.sum((a - 1.0) ** 2))
        f = float(ll - penalty)
        grad = np.concatenate([g_theta, g_loga, g_b])
        if not np.isfinite(f) or not np.all(np.isfinite(grad)):
            f = -np.inf
        if not curvature:
            return f, grad
        w = p * (1.0 - p)
        h = np.concatenate([
            np.bincount(data.u, weights=w * ai * ai, minlength=nl),
            np.bincount(data.i, weights=w * z * z, minlength=ni) + l2 * a * a,
            np.bincount(data.i, weights=w * ai * ai, minlength=ni),
        ]) + l2
    return f, grad, h


def _lbfgs_direction(g, h, memory):
    """Two-loop recursion for an ascent direction, seeded with the diagonal curvature."""
    q = g.copy()
    alphas = []
    for s_k, y_k, rho in reversed(memory):
        alpha = rho * np.dot(s_k, q)
        alphas.append(alpha)
        q -= alpha * y_k
    r = q / h
    for (s_k, y_k, rho), alpha in zip(memory, reversed(alphas)):
        beta = rho * np.dot(y_k, r)
        r += (alpha - beta) * s_k
    return r


def calibrate(ds: Dataset, cfg: CalibrationConfig = CalibrationConfig(),
              history_size: int = 10) -> IrtModel:
    """Joint maximum a-posteriori fit of learner abilities and item parameters.

    Quasi-Newton (L-BFGS) ascent on the penalised log-likelihood with a
    backtracking Armijo line search, so the objective never decreases between
    epochs. Stops when an epoch improves the objective by less than ``cfg.tol``.
    Items without responses stay at the prior (a = 1, b = 0).
    """
    if not ds.logs or ds.n_records == 0:
        raise ValueError("cannot calibrate on an empty dataset")
    empty = [lid for lid, lg in ds.logs.items() if len(lg) == 0]
    if empty:
        raise ValueError(f"learners without records: {empty[:5]}")
    data = ResponseArrays.from_dataset(ds)
    x = np.zeros(data.n_params)
    f, g, h = objective(x, data, cfg.l2, curvature=True)
    history = [f]
    memory: list[tuple[np.ndarray, np.ndarray, float]] = []
    for _ in range(cfg.epochs):
        direction = _lbfgs_direction(g, h, memory)
        slope = float(np.dot(g, direction))
        if slope <= 0:
            memory.clear()
            direction = g / h
            slope = float(np.dot(g, direction))
            if slope <= 0:
                break
        step = cfg.learning_rate
        while True:
            x_new = x + step * direction
            f_new, g_new, h_new = objective(x_new, data, cfg.l2, curvature=True)
            if f_new >= f + 1e-4 * step * slope:
                break
            step *= 0.5
            if step < 1e-12:
                f_new, x_new, g_new, h_new = f, x, g, h
                break
        improvement = f_new - f
        # curvature pair for the negated (minimisation) problem
        s_k, y_k = x_new - x, g - g_new
        sy = float(np.dot(s_k, y_k))
        if sy > 1e-12:
            memory.append((s_k, y_k, 1.0 / sy))
            if len(memory) > history_size:
                memory.pop(0)
        x, f, g, h = x_new, f_new, g_new, h_new
        history.append(f)
        if improvement < cfg.tol:
            break
    else:
        log.debug("calibration stopped after %d epochs (tol not reached)", cfg.epochs)

    theta, log_a, b = data.unpack(x)
    return IrtModel(
        theta={k: float(v) for k, v in zip(data.learner_ids, theta)},
        a={k: float(v) for k, v in zip(data.item_ids, np.exp(log_a))},
        b={k: float(v) for k, v in zip(data.item_ids, b)},
        history=history,
    )


# ---------------------------------------------------------- ability inference


def theta_grid(points: int = GRID_POINTS, lo: float = GRID_MIN, hi: float = GRID_MAX) -> np.ndarray:
    return np.linspace(lo, hi, points)


def normal_prior(grid: np.ndarray, mean: float = 0.0, sd: float = 1.0) -> np.ndarray:
    return np.exp(-0.5 * ((grid - mean) / sd) ** 2)


def eap(a, b, y, grid: np.ndarray | None = None, prior: np.ndarray | None = None) -> float:
    """Posterior-mean ability on a quadrature grid."""
    grid = theta_grid() if grid is None else np.asarray(grid, dtype=float)
    prior = normal_prior(grid) if prior is None else np.asarray(prior, dtype=float)
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return float(np.dot(grid, prior) / prior.sum())
    b = np.asarray(b, dtype=float)
    y = np.asarray(y, dtype=float)
    z = a[None, :] * (grid[:, None] - b[None, :])
    loglik = -(y * np.logaddexp(0.0, -z) + (1.0 - y) * np.logaddexp(0.0, z)).sum(axis=1)
    logpost = loglik + np.log(prior)
    w = np.exp(logpost - logpost.max())
    return float(np.dot(grid, w) / w.sum())


def infer_ability(model: IrtModel, log: LearnerLog, grid: np.ndarray | None = None) -> float:
    """EAP ability for one learner with the model's item parameters held fixed."""
    a, b = model.item_params(log.exercise_ids)
    return eap(a, b, log.responses, grid)


# ----------------------------------------------------------------- proficiency


@dataclass
class ProficiencyState:
    """Per-concept mastery in [0, 1] tracked with an exponential moving average."""

    prof: dict[str, float] = field(default_factory=dict)
    eta: float = 0.2
    default: float = 0.5

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")

    def get(self, concept: str) -> float:
        return self.prof.get(concept, self.default)

    def update(self, concept: str, y: int) -> float:
        p = (1.0 - self.eta) * self.get(concept) + self.eta * y
        p = min(1.0, max(0.0, p))
        self.prof[concept] = p
        return p

    def tier(self, concept: str) -> str:
        return proficiency_tier(self.get(concept))

    def snapshot(self) -> dict[str, float]:
        return dict(self.prof)


def update_proficiency(st: ProficiencyState, concept: str, y: int) -> ProficiencyState:
    st.update(concept, y)
    return st


def proficiency_tier(p: float, bounds: tuple[float, float] = RATIO_BOUNDS) -> str:
    return tierize(p, bounds)


def model_from_exercises(exercises: Mapping) -> IrtModel | None:
    """Item parameters stored on the bank itself, if every exercise has them."""
    if not exercises or any(e.irt_a is None or e.irt_b is None for e in exercises.values()):
        return None
    return IrtModel(a={k: e.irt_a for k, e in exercises.items()},
                    b={k: e.irt_b for k, e in exercises.items()})
