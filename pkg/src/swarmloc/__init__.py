"""Relative and cooperative localization for leader-follower robot swarms.

Followers estimate their pose relative to a leader from heterogeneous
relative measurements (bearing, distance or relative position) and their
own odometry, then fly a formation around the leader using those estimates.
"""

from .harness import RunLog, Simulation, run, steady_state_errors, write_csv
from .scenario import Scenario, ScenarioError, load_default, load_scenario
from .topology import SensorKind

__version__ = "0.1.0"

__all__ = [
    "RunLog",
    "Scenario",
    "ScenarioError",
    "SensorKind",
    "Simulation",
    "load_default",
    "load_scenario",
    "run",
    "steady_state_errors",
    "write_csv",
]
