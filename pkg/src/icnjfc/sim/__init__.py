"""Packet-level simulation of Interest/Data exchange."""
from .engine import MetricsLog, Scenario, Simulator, run
from .strategies import STRATEGIES, make_strategy
from .workload import Workload, generate_requests

__all__ = ["MetricsLog", "Scenario", "Simulator", "run", "STRATEGIES", "make_strategy",
           "Workload", "generate_requests"]
