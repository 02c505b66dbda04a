from .engine import SimCore, SimError
from .topology import Topology, TopologyError, build_topology
from .types import (
    AttackSpec,
    EnergyModel,
    NodeState,
    NodeStatus,
    PJ_PER_J,
)

__all__ = [
    "AttackSpec",
    "EnergyModel",
    "NodeState",
    "NodeStatus",
    "PJ_PER_J",
    "SimCore",
    "SimError",
    "Topology",
    "TopologyError",
    "build_topology",
]
