"""Star-based location cloaking for road networks, with baselines, attacks and a simulator."""

from __future__ import annotations

from .network import NetworkIndex, RoadNetwork, load_network
from .queries import Query, QueryProfile

__version__ = "0.1.0"

__all__ = ["NetworkIndex", "Query", "QueryProfile", "RoadNetwork", "load_network", "__version__"]
