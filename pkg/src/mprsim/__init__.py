"""Slotted simulator for adaptive-backoff CSMA/CA over a k-MPR channel with
per-access-category service differentiation."""

from mprsim.channel import ChannelConfig, ChannelState, InFlightTransmission, HalfDuplexViolation
from mprsim.mac import (
    AccessCategoryConfig,
    BackoffConfig,
    CountdownMode,
    Phase,
    StationState,
    decrement_amount,
    default_ac_table,
    draw_backoff,
    slot_is_idle,
)
from mprsim.metrics import MetricsAccumulator, MetricsReport
from mprsim.traffic import TrafficConfig, TrafficMode

__version__ = "0.1.0"

__all__ = [
    "AccessCategoryConfig",
    "BackoffConfig",
    "ChannelConfig",
    "ChannelState",
    "CountdownMode",
    "HalfDuplexViolation",
    "InFlightTransmission",
    "MetricsAccumulator",
    "MetricsReport",
    "Phase",
    "StationState",
    "TrafficConfig",
    "TrafficMode",
    "decrement_amount",
    "default_ac_table",
    "draw_backoff",
    "slot_is_idle",
]
