"""Generative learner agents, IRT tools and an adaptive-testing environment."""
from .agent import AgentConfig, LearnerAgent, StepOutcome, Truth
from .backends import HttpBackend, StubBackend
from .cognition import IrtModel, ProficiencyState, calibrate, infer_ability, irt_prob
from .data import Dataset, Exercise, LearnerLog, ResponseRecord, load_dataset
from .memory import MemoryState, Observation
from .profile import LearnerProfile, compute_profile, random_profile

__version__ = "0.1.0"
