"""Automated ground segment for a small geostationary mission.

The package models the full chain from satellite simulator through
telemetry distribution, classification and per-experiment data
separation, procedure execution, mission planning, schedule execution,
event-driven automation, carrier spectrum monitoring and a web gateway,
all running on one deterministic event loop so closed-loop behaviour
can be tested at accelerated clock rates.
"""

from .clock import EventLoop, OfficeHours, SimClock
from .mib import Classification, CommandDef, LimitDef, Mib, ParameterDef, load_mib
from .system import GroundSegment, build

__version__ = "1.0.0"

__all__ = [
    "Classification",
    "CommandDef",
    "EventLoop",
    "GroundSegment",
    "LimitDef",
    "Mib",
    "OfficeHours",
    "ParameterDef",
    "SimClock",
    "build",
    "load_mib",
    "__version__",
]
