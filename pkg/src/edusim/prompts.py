"""Prompt templates with named ``$slot`` placeholders.

Each template file starts with a ``version: N`` line followed by the body.
The shipped defaults live in the package's ``templates`` directory; a custom
directory may override any subset of them.
"""
from __future__ import annotations

import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

TEMPLATE_NAMES = (
    "accept", "identify", "solve_idea", "solve_answer", "solve_predict",
    "summary", "corrective", "survey",
)


@dataclass(frozen=True)
class Prompt:
    """A fully rendered prompt. ``meta`` carries structured facts for offline backends."""

    name: str
    version: int
    text: str
    meta: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    version: int
    body: str

    @property
    def slots(self) -> set[str]:
        return {
            m.group("named") or m.group("braced")
            for m in string.Template.pattern.finditer(self.body)
            if m.group("named") or m.group("braced")
        }

    @classmethod
    def parse(cls, name: str, raw: str) -> "PromptTemplate":
        head, _, body = raw.partition("\n")
        key, _, value = head.partition(":")
        if key.strip() != "version" or not value.strip().isdigit():
            raise ValueError(f"template {name!r} must start with 'version: N'")
        return cls(name, int(value), body)

    def render(self, meta: dict | None = None, **slots: str) -> Prompt:
        missing = self.slots - slots.keys()
        if missing:
            raise KeyError(f"template {self.name!r} is missing slots {sorted(missing)}")
        text = string.Template(self.body).substitute(slots)
        return Prompt(self.name, self.version, text, dict(meta or {}))


def load_templates(directory: str | Path | None = None) -> dict[str, PromptTemplate]:
    """Shipped templates, overridden by same-named ``*.txt`` files in ``directory``."""
    out = {}
    pkg = resources.files("edusim") / "templates"
    for name in TEMPLATE_NAMES:
        out[name] = PromptTemplate.parse(name, (pkg / f"{name}.txt").read_text(encoding="utf-8"))
    if directory is not None:
        for path in sorted(Path(directory).glob("*.txt")):
            out[path.stem] = PromptTemplate.parse(path.stem, path.read_text(encoding="utf-8"))
    return out
