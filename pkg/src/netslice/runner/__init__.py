"""Scenario loading, the simulation engine, reports and the command line."""

from .engine import Engine, InvariantViolation, run, streams
from .replicate import replicate
from .report import MetricsReport
from .scenario import Scenario, ScenarioError, load_scenario

__all__ = ["Engine", "InvariantViolation", "MetricsReport", "Scenario", "ScenarioError", "load_scenario",
           "replicate", "run", "streams"]
