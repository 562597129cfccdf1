"""Multi-hop pressure traffic signal control."""

from ._mhp import (
    HarnessError,
    Network,
    NetworkError,
    ScenarioError,
    SimError,
    __version__,
    catalog,
    load_network,
    pressure_vector,
    simulate,
    train,
)

__all__ = [
    "HarnessError",
    "Network",
    "NetworkError",
    "ScenarioError",
    "SimError",
    "__version__",
    "catalog",
    "load_network",
    "pressure_vector",
    "simulate",
    "train",
]
