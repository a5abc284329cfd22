"""Fair distributed deferred acceptance under common provider preferences."""

from __future__ import annotations

from .instance import MatchingInstance, generate_random, validate
from .matching import FractionalMatching, MechanismResult, run_common_da, run_mechanism
from .tiebreak import Strategy, TieBreak, break_ties

__all__ = [
    "FractionalMatching",
    "MatchingInstance",
    "MechanismResult",
    "Strategy",
    "TieBreak",
    "break_ties",
    "generate_random",
    "run_common_da",
    "run_mechanism",
    "validate",
]
