"""Slot-based simulator and optimizer for a three-layer aerial-MEC
industrial sensor network: ground sensor devices, a UAV edge cluster with
service caching, and a macro base station behind a relay hop."""

from .model import (Decision, Route, Scenario, SlotState, Task,
                    audit_constraints, link_rate, propulsion_power,
                    service_delay, slot_energy, total_delay)
from .scenario import ScenarioSpec, generate_scenario, spec_from_json

__all__ = [
    "Decision", "Route", "Scenario", "SlotState", "Task", "ScenarioSpec",
    "audit_constraints", "generate_scenario", "link_rate", "propulsion_power",
    "service_delay", "slot_energy", "spec_from_json", "total_delay",
]
