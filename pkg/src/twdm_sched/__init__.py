"""Multi-tenant TWDM-PON bandwidth map merging with SLA tracking."""
from .core import Allocation, ConfigError, PhysicalGrant, ScenarioConfig, SlaClass, VirtualBmap
from .runner import ScenarioResult, SweepGrid, run_scenario, run_sweep

__all__ = [
    "Allocation",
    "ConfigError",
    "PhysicalGrant",
    "ScenarioConfig",
    "ScenarioResult",
    "SlaClass",
    "SweepGrid",
    "VirtualBmap",
    "run_scenario",
    "run_sweep",
]
