"""Deterministic simulator: topologies, scenarios, engine, oracles."""

from .engine import InvariantViolation, Simulation, run_scenario, substream
from .metrics import PaymentResult, RunMetrics
from .oracle import cheapest_fee_path, shortest_path_hops
from .scenario import Scenario, ScenarioError, load_scenario, parse_scenario
from .topology import Topology, load_topology, save_topology

__all__ = [
    "InvariantViolation",
    "PaymentResult",
    "RunMetrics",
    "Scenario",
    "ScenarioError",
    "Simulation",
    "Topology",
    "cheapest_fee_path",
    "load_scenario",
    "load_topology",
    "parse_scenario",
    "run_scenario",
    "save_topology",
    "shortest_path_hops",
    "substream",
]
