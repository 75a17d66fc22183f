"""Flat run configuration, loadable from and writable to JSON."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .agent import AgentConfig
from .backends import API_KEY_ENV, HttpBackend, TraceWriter
from .cognition import CalibrationConfig
from .experiments import Settings
from .profile import TierConfig
from .prompts import load_templates

# keys that never change results
VOLATILE_KEYS = {"jobs", "out", "trace"}


@dataclass
class RunConfig:
    dataset: str | None = None
    out: str = "runs"
    seed: int = 0
    jobs: int = 0  # 0 = available parallelism

    backend: str = "stub"  # stub | http
    base_url: str = "https://api.openai.com/v1"
    model_name: str = "gpt-3.5-turbo"
    max_in_flight: int = 4
    max_retries: int = 2
    retry_backoff: float = 1.0
    temperature: float = 0.0
    max_tokens: int = 256
    templates_dir: str | None = None
    trace: bool = False
    concept_accuracy: float = 0.8

    short_window: int = 5
    promote_at: int = 5
    forget_above: float = 0.99
    eta: float = 0.2
    summary_cap: int = 1200
    record_rejections: bool = True

    learning_rate: float = 1.0
    epochs: int = 500
    l2: float = 0.01

    ratio_low: float = 1 / 3
    ratio_high: float = 2 / 3
    ability_low: float = -0.5
    ability_high: float = 0.5
    preference_size: int = 3

    split_ratio: float = 0.9
    selectors: str = "fsi,kli,maat"
    alpha: float = 0.5
    grid_points: int = 81
    kli_points: int = 61
    rounds: int = 10
    n_agents: int = 100
    zero_shot: bool = False
    pretrain_agents: int = 100
    pretrain_items: int = 30
    augment_k: int = 20
    lengths: str = "5,10"
    train_fraction: float = 0.6

    def __post_init__(self):
        if self.short_window < 1:
            raise ValueError("short_window must be >= 1")
        if self.promote_at < 1:
            raise ValueError("promote_at must be >= 1")
        if not 0 < self.forget_above < 1:
            raise ValueError("forget_above must lie in (0, 1)")
        if self.backend not in ("stub", "http"):
            raise ValueError(f"backend must be 'stub' or 'http', got {self.backend!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n",
                              encoding="utf-8")

    def with_overrides(self, overrides: dict) -> "RunConfig":
        d = self.to_dict()
        for key, raw in overrides.items():
            if key not in d:
                raise ValueError(f"unknown config key {key!r}")
            d[key] = _coerce(raw, d[key], key)
        return RunConfig.from_dict(d)

    def digest(self, command: str) -> str:
        stable = {k: v for k, v in self.to_dict().items() if k not in VOLATILE_KEYS}
        blob = json.dumps({"command": command, **stable}, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    @property
    def selector_names(self) -> list[str]:
        return [s.strip() for s in self.selectors.split(",") if s.strip()]

    @property
    def length_values(self) -> list[int]:
        return [int(s) for s in self.lengths.split(",") if s.strip()]

    def settings(self, trace_path: Path | None = None) -> Settings:
        backend = None
        if self.backend == "http":
            backend = HttpBackend(self.base_url, self.model_name,
                                  max_retries=self.max_retries, backoff=self.retry_backoff,
                                  max_in_flight=self.max_in_flight)
        return Settings(
            agent=AgentConfig(
                short_window=self.short_window, promote_at=self.promote_at,
                forget_above=self.forget_above, eta=self.eta, summary_cap=self.summary_cap,
                zero_shot=self.zero_shot, record_rejections=self.record_rejections,
                ability_bounds=(self.ability_low, self.ability_high),
                temperature=self.temperature, max_tokens=self.max_tokens,
            ),
            tiers=TierConfig((self.ratio_low, self.ratio_high),
                             (self.ability_low, self.ability_high), self.preference_size),
            calibration=CalibrationConfig(self.learning_rate, self.epochs, self.l2),
            concept_accuracy=self.concept_accuracy,
            backend=backend,
            templates=load_templates(self.templates_dir),
            trace=TraceWriter(trace_path) if trace_path else None,
            grid_points=self.grid_points,
            alpha=self.alpha,
            kli_points=self.kli_points,
            jobs=self.jobs if self.jobs > 0 else (os.cpu_count() or 1),
        )


def _coerce(raw, current, key):
    if not isinstance(raw, str):
        return raw
    if isinstance(current, bool):
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise ValueError(f"{key} expects a boolean, got {raw!r}")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if current is None and raw.lower() in ("", "none", "null"):
        return None
    return raw


__all__ = ["RunConfig", "API_KEY_ENV"]
