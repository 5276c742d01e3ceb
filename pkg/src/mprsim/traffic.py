"""Packet sources and frame timing."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np


class TrafficMode(enum.Enum):
    POISSON = "poisson"
    SATURATION = "saturation"


@dataclass(frozen=True)
class TrafficConfig:
    mode: TrafficMode = TrafficMode.SATURATION
    rate_pps: float = 0.0          # per station, packets per second (Poisson only)
    payload_bits: int = 8184
    mac_header_bits: int = 272
    phy_header_bits: int = 128
    queue_capacity: int | None = None  # None: unbounded

    def __post_init__(self):
        if self.rate_pps < 0 or not math.isfinite(self.rate_pps):
            raise ValueError(f"rate_pps must be finite and >= 0, got {self.rate_pps}")
        if self.payload_bits <= 0:
            raise ValueError("payload_bits must be > 0")
        if self.mac_header_bits < 0 or self.phy_header_bits < 0:
            raise ValueError("header sizes must be >= 0")
        if self.queue_capacity is not None and self.queue_capacity < 0:
            raise ValueError("queue_capacity must be >= 0")

    @property
    def frame_bits(self) -> int:
        return self.phy_header_bits + self.mac_header_bits + self.payload_bits


def arrivals_in_slot(rng: np.random.Generator, cfg: TrafficConfig, slot_us: float) -> int:
    """Poisson number of packets arriving at one station during one slot."""
    if cfg.mode is not TrafficMode.POISSON:
        raise ValueError("arrivals_in_slot needs a Poisson source")
    mean = cfg.rate_pps * slot_us * 1e-6
    if mean == 0:
        return 0
    return int(rng.poisson(mean))


def frame_airtime_us(bits: int, bitrate_bps: float) -> float:
    return bits * 1e6 / bitrate_bps


def frame_duration_slots(cfg: TrafficConfig, bitrate_bps: float, slot_us: float) -> int:
    """Slots a frame occupies on the channel, rounded up to whole slots."""
    if bitrate_bps <= 0 or slot_us <= 0:
        raise ValueError("bitrate and slot time must be positive")
    exact = Fraction(cfg.frame_bits) * 10**6 / (Fraction(bitrate_bps) * Fraction(slot_us))
    return max(1, math.ceil(exact))


def normalized_offered_load(per_station_rate: float, n_stations: int, frame_duration_us: float) -> float:
    """Aggregate arrival rate in frames per frame time (may exceed 1 under MPR)."""
    return n_stations * per_station_rate * frame_duration_us * 1e-6


def rate_for_load(load: float, n_stations: int, frame_duration_us: float) -> float:
    """Per-station rate (packets/s) giving normalized offered load ``load``."""
    if load < 0:
        raise ValueError("load must be >= 0")
    if load == 0:
        return 0.0
    return load / (n_stations * frame_duration_us * 1e-6)


class PoissonArrivals:
    """Slot-level Poisson source that jumps straight to the next nonempty slot.

    Equivalent in law to drawing an independent Poisson count every slot: the
    gap to the next nonempty slot is geometric with success probability
    ``1 - exp(-mean)``, and the count there is zero-truncated Poisson.
    """

    def __init__(self, rng: np.random.Generator, rate_pps: float, slot_us: float):
        self.rng = rng
        self.mean = rate_pps * slot_us * 1e-6
        self.p_nonempty = -math.expm1(-self.mean)
        self.next_slot = math.inf
        self.next_count = 0
        self._advance(-1)

    def _advance(self, after: int):
        if self.mean <= 0:
            self.next_slot, self.next_count = math.inf, 0
            return
        self.next_slot = after + int(self.rng.geometric(self.p_nonempty))
        self.next_count = self._truncated_count()

    def _truncated_count(self) -> int:
        mu = self.mean
        u = self.rng.random() * self.p_nonempty
        # inverse CDF over k >= 1 of e^-mu mu^k / k!
        k, pk = 1, math.exp(-mu) * mu
        acc = pk
        while acc < u and pk > 0:
            k += 1
            pk *= mu / k
            acc += pk
        return k

    def pop(self, slot: int) -> int:
        """Packets arriving in ``slot`` (which must not be past the pending arrival)."""
        if slot != self.next_slot:
            return 0
        n = self.next_count
        self._advance(slot)
        return n
