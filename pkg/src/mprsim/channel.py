"""k-MPR collision channel with ideal enhanced carrier sensing.

Time is slotted. A frame admitted in slot ``s`` with duration ``D`` occupies
slots ``s .. s+D-1`` and is retired at the boundary ``s+D`` (its ``end_slot``).
All frames on the air succeed while their number stays at or below the MPR
limit; the first slot it is exceeded, every frame on the air is doomed.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class HalfDuplexViolation(RuntimeError):
    """A station was asked to start a frame while it already has one on the air."""


@dataclass(frozen=True)
class ChannelConfig:
    mpr_limit: int = 8          # K
    bitrate_bps: float = 1e6
    ack_overhead_slots: int = 0  # sender-side only, never occupies the channel

    def __post_init__(self):
        if self.mpr_limit < 1:
            raise ValueError(f"mpr_limit must be >= 1, got {self.mpr_limit}")
        if self.bitrate_bps <= 0:
            raise ValueError(f"bitrate_bps must be > 0, got {self.bitrate_bps}")
        if self.ack_overhead_slots < 0:
            raise ValueError("ack_overhead_slots must be >= 0")


@dataclass
class InFlightTransmission:
    station_id: int
    ac_id: int
    start_slot: int
    end_slot: int  # exclusive
    doomed: bool = False


@dataclass
class ChannelState:
    mpr_limit: int
    slot: int = 0
    in_flight: dict[int, InFlightTransmission] = field(default_factory=dict)

    def sense(self) -> int:
        """Number of ongoing transmissions (ideal sensing: exact, even above K)."""
        return len(self.in_flight)

    def admit_transmissions(self, starters, duration_slots: int) -> "ChannelState":
        """Put ``starters`` (pairs of station id, AC id) on the air at ``self.slot``.

        Dooming is evaluated once, after every starter of the slot is admitted.
        """
        if duration_slots < 1:
            raise ValueError("duration_slots must be positive")
        starters = list(starters)
        if not starters:
            return self
        flight = self.in_flight
        for sid, _ in starters:
            if sid in flight:
                raise HalfDuplexViolation(f"station {sid} is already transmitting")
        end = self.slot + duration_slots
        for sid, ac in starters:
            flight[sid] = InFlightTransmission(sid, ac, self.slot, end)
        if len(flight) > self.mpr_limit:
            for tx in flight.values():
                tx.doomed = True
        return self

    def retire_completions(self) -> list[tuple[int, int, bool]]:
        """Remove frames whose ``end_slot`` equals the current slot.

        Returns ``(station_id, ac_id, success)`` sorted by station id.
        """
        now = self.slot
        done = [tx for tx in self.in_flight.values() if tx.end_slot == now]
        if not done:
            return []
        done.sort(key=lambda tx: tx.station_id)
        for tx in done:
            del self.in_flight[tx.station_id]
        return [(tx.station_id, tx.ac_id, not tx.doomed) for tx in done]

    def next_completion(self) -> int | None:
        if not self.in_flight:
            return None
        return min(tx.end_slot for tx in self.in_flight.values())
