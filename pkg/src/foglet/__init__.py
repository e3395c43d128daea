"""foglet: workload orchestration for multi-tier fog infrastructures,
simulated end to end.

Deployment requests carry a component plus compute/network/location/access
requirements; the negotiator admits or rejects them against live resource
state, the scheduler filters and ranks nodes, and a fluid flow simulator
accounts the resulting traffic, link faults included.
"""

from .config import EngineConfig, config_from_document
from .engine import Engine
from .model import (
    ComputeProfile,
    DeploymentRequest,
    NetworkProfile,
    ResourceVector,
    Tier,
    ValidationError,
    default_thresholds,
    validate_request,
)
from .scenario import run_scenario, build_engine
from .documents import load_scenario, load_yaml
from .topology import Topology, TopologyError, load_topology

__version__ = "0.1.0"

__all__ = [
    "ComputeProfile",
    "DeploymentRequest",
    "Engine",
    "EngineConfig",
    "NetworkProfile",
    "ResourceVector",
    "Tier",
    "Topology",
    "TopologyError",
    "ValidationError",
    "build_engine",
    "config_from_document",
    "default_thresholds",
    "load_scenario",
    "load_topology",
    "load_yaml",
    "run_scenario",
    "validate_request",
    "__version__",
]
