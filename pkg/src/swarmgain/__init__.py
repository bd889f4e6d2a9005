"""Peer-assisted CDN traffic gain: analytic swarm model and trace-driven simulator."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    SwarmParams,
    capacity,
    expected_busy_period,
    multi_swarm_gain,
    partial_participation_gain,
    single_swarm_gain,
    unavailability,
)
from .simulator import ScenarioConfig, SimReport, run  # noqa: E402

__all__ = [
    "SwarmParams",
    "capacity",
    "expected_busy_period",
    "multi_swarm_gain",
    "partial_participation_gain",
    "single_swarm_gain",
    "unavailability",
    "ScenarioConfig",
    "SimReport",
    "run",
]
