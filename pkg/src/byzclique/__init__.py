"""Byzantine-tolerant recognition of hereditary graph classes in a simulated congested clique."""
from .graphcore import BUILTIN_CLASSES, CLASSES, Graph, get_class, is_f_far, membership
from .protocol import Decision, RunReport, round_budget, run_recognition
from .scenario import Scenario

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_CLASSES",
    "CLASSES",
    "Decision",
    "Graph",
    "RunReport",
    "Scenario",
    "get_class",
    "is_f_far",
    "membership",
    "round_budget",
    "run_recognition",
]
