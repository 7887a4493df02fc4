"""Sensor-network localization workbench on unit-disk street scenarios."""
from .netgen import (
    CommGraph, DeploymentSpec, NetworkInstance, RangingTable, build_unit_disk_graph,
    generate_network, measure_distances, paper_streets,
)

__version__ = "0.1.0"

__all__ = [
    "CommGraph", "DeploymentSpec", "NetworkInstance", "RangingTable", "build_unit_disk_graph",
    "generate_network", "measure_distances", "paper_streets",
]
