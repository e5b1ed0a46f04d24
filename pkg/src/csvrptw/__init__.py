"""Contextual stochastic vehicle routing with soft time windows.

Data generation, estimators, learned penalty models, an exact
branch-and-price solver with scenario-aware pricing, the prescriptive
methods built on top of it and an experiment harness.
"""

from .core import (Instance, PenaltyFn, QUADRATIC, Route, ScenarioSet, Solution, arrival_times, load_solomon,
                   parse_solomon, route_penalty, solution_value)
from .datagen import Dataset, GenerativeModel, TestSet, make_dataset, make_testset
from .methods import METHODS, MethodConfig, MethodContext, Prescription, prescribe
from .solver import PenaltyModelObjective, ScenarioObjective, SolveReport, SolverLimits, branch_and_price

__version__ = "0.1.0"

__all__ = [
    "Instance", "PenaltyFn", "QUADRATIC", "Route", "ScenarioSet", "Solution", "arrival_times", "load_solomon",
    "parse_solomon", "route_penalty", "solution_value", "Dataset", "GenerativeModel", "TestSet", "make_dataset",
    "make_testset", "METHODS", "MethodConfig", "MethodContext", "Prescription", "prescribe",
    "PenaltyModelObjective", "ScenarioObjective", "SolveReport", "SolverLimits", "branch_and_price",
]
