"""Simulation of STAR-DCM assisted integrated sensing and communication."""

__version__ = "0.1.0"

from .config import Scenario, ScenarioError, load_scenario, scenario_from_dict  # noqa: E402
from .estimators import BeamTracker, SplitOptimizer  # noqa: E402
from .protocol import run_campaign, run_slot  # noqa: E402

__all__ = [
    "BeamTracker",
    "Scenario",
    "ScenarioError",
    "SplitOptimizer",
    "load_scenario",
    "run_campaign",
    "run_slot",
    "scenario_from_dict",
]
