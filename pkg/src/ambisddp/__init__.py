"""Ambiguity-aware SDDP for multistage binary programs.

Solvers for risk-neutral, distributionally robust (Wasserstein worst case)
and distributionally risk-receptive (Wasserstein best case) policies, with an
own simplex and branch and bound underneath.
"""
from ._kernel import BACKEND
from .ambiguity import AmbiguitySpec
from .dp import exact_value_dp
from .errors import AmbiSddpError, ModelError
from .model import Cut, MultistageModel, ScenarioSupport, StageTemplate
from .sddp import Policy, SolveLog, SolverConfig, run

__version__ = "0.1.0"

__all__ = ["BACKEND", "AmbiguitySpec", "exact_value_dp", "AmbiSddpError", "ModelError", "Cut",
           "MultistageModel", "ScenarioSupport", "StageTemplate", "Policy", "SolveLog",
           "SolverConfig", "run"]
