"""Python access to the droop contraction certifier."""

import json

from ._core import (
    ModelError,
    Scenario,
    ScenarioError,
    __version__,
    comparison_radius,
    jacobian,
    load_scenario,
    measure,
    parse_scenario,
    power_injections,
    simulate,
)
from . import _core


def certify(scenario, jobs=1):
    """Contraction certificate of a scenario as a dict."""
    return json.loads(_core._certify_json(scenario, jobs))


def run_oracles(scenario, n_states=1000, seed=42, jobs=1):
    return json.loads(_core._oracles_json(scenario, n_states, seed, jobs))


__all__ = [
    "ModelError",
    "Scenario",
    "ScenarioError",
    "__version__",
    "certify",
    "comparison_radius",
    "jacobian",
    "load_scenario",
    "measure",
    "parse_scenario",
    "power_injections",
    "run_oracles",
    "simulate",
]
