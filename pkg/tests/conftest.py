import pytest

from edusim.agent import AgentConfig, LearnerAgent
from edusim.backends import StubBackend
from edusim.cognition import IrtModel
from edusim.data import Dataset, Exercise, generate_synthetic, make_log
from edusim.profile import LearnerProfile


@pytest.fixture(scope="session")
def small_synthetic():
    """30 learners, 60 items, 12 concepts, 20 records each."""
    return generate_synthetic(0, 30, 60, 12, records_per_learner=20)


def tiny_dataset() -> Dataset:
    """Four exercises over three concepts; two learners."""
    exercises = {
        "x1": Exercise("x1", "A", "Add two numbers."),
        "x2": Exercise("x2", "A", "Add three numbers."),
        "x3": Exercise("x3", "B", "Multiply two numbers."),
        "x4": Exercise("x4", "C", ""),
    }
    logs = {
        "alice": make_log("alice", [("x1", 1), ("x3", 0), ("x2", 1)]),
        "bob": make_log("bob", [("x4", 1)]),
    }
    return Dataset(exercises, logs, frozenset("ABC"))


def make_profile(ability=0.0, tiers=None) -> LearnerProfile:
    base = {"activity": "medium", "diversity": "medium", "success_rate": "medium",
            "ability": "medium"}
    return LearnerProfile(0.5, 0.5, 0.5, (), ability, {**base, **(tiers or {})})


def make_agent(backend=None, ability=0.0, exercises=None, config=AgentConfig(),
               seed=0, concepts=None, model=None, **kw) -> LearnerAgent:
    exercises = exercises or {}
    model = model or IrtModel(a={e: 1.0 for e in exercises}, b={e: 0.0 for e in exercises})
    concepts = concepts or sorted({e.concept_id for e in exercises.values()} | {"k0", "k1", "k2", "k3"})
    tiers = {"ability": "high" if ability >= 0.5 else "low" if ability < -0.5 else "medium"}
    return LearnerAgent("u", make_profile(ability, tiers), backend or StubBackend(seed),
                        model=model, concepts=concepts, seed=seed, config=config, **kw)


# one PASS/FAIL line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
