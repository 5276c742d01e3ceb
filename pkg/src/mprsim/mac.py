"""Per-station MAC: adaptive / fixed countdown, AIFS gating, binary exponential
backoff, retry and drop handling, and the default access-category table.

Slot semantics used throughout (one call of :func:`step_station` per slot):

* a slot is *idle* for a station when the sensed count ``L`` is at most the
  station's threshold; ``idle_run`` counts consecutive idle slots up to and
  including the current one and is reset by a busy slot or by the station's
  own transmission (the station is deaf while on the air);
* AIFS is satisfied in a slot once ``aifs_slots`` idle slots precede it and
  the slot itself is idle (``idle_run >= aifs_slots + 1``);
* the backoff counter is decremented only in idle slots that follow a slot in
  which AIFS was already satisfied (``idle_run >= aifs_slots + 2``), so a
  counter of ``b`` costs ``b`` idle slots on top of the AIFS wait;
* after any decrement, a station holding a packet transmits as soon as its
  counter is nonpositive and AIFS is satisfied.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np


class CountdownMode(enum.Enum):
    ADAPTIVE = "adaptive"    # decrement by K - L
    FIXED_ONE = "fixed"      # decrement by 1


class Phase(enum.Enum):
    IDLE = "idle"                  # backoff finished, nothing to send
    BACKOFF = "backoff"            # deferring for AIFS and/or counting down
    TRANSMITTING = "transmitting"


@dataclass(frozen=True)
class BackoffConfig:
    cw_min: int = 16
    max_backoff_stage: int = 5   # m
    retry_limit: int = 4
    inclusive_window: bool = True  # draw from [0, CW]; False gives [0, CW-1]

    def __post_init__(self):
        if self.cw_min < 1:
            raise ValueError(f"cw_min must be >= 1, got {self.cw_min}")
        if not 0 <= self.max_backoff_stage <= 32:
            raise ValueError(f"max_backoff_stage must be in [0, 32], got {self.max_backoff_stage}")
        if self.retry_limit < 0:
            raise ValueError(f"retry_limit must be >= 0, got {self.retry_limit}")

    @property
    def cw_max(self) -> int:
        return self.cw_min << self.max_backoff_stage

    def window(self, stage: int) -> int:
        return self.cw_min << min(stage, self.max_backoff_stage)


@dataclass(frozen=True)
class AccessCategoryConfig:
    ac_id: int
    threshold: int                  # K_t
    countdown_mode: CountdownMode
    backoff: BackoffConfig = field(default_factory=BackoffConfig)
    aifs_us: float | None = None    # None: use the scenario's DIFS

    def __post_init__(self):
        if self.ac_id not in (0, 1, 2, 3):
            raise ValueError(f"ac_id must be 0..3, got {self.ac_id}")
        if self.threshold < 0:
            raise ValueError(f"threshold must be >= 0, got {self.threshold}")
        if self.aifs_us is not None and self.aifs_us < 0:
            raise ValueError("aifs_us must be >= 0")

    def check_against(self, mpr_limit: int):
        if self.threshold >= mpr_limit:
            raise ValueError(
                f"AC{self.ac_id}: threshold must be < K (threshold={self.threshold}, K={mpr_limit})"
            )


def decrement_amount(mode: CountdownMode, mpr_limit: int, threshold: int, sensed: int) -> int:
    """Counter decrement for one slot with ``sensed`` ongoing transmissions."""
    if threshold >= mpr_limit:
        raise ValueError(f"threshold must be < K (threshold={threshold}, K={mpr_limit})")
    if sensed < 0:
        raise ValueError("sensed count must be >= 0")
    if sensed > threshold:
        return 0
    if mode is CountdownMode.ADAPTIVE:
        return mpr_limit - sensed
    return 1


def slot_is_idle(sensed: int, threshold: int) -> bool:
    return sensed <= threshold


def draw_backoff(rng: np.random.Generator, cw: int, inclusive: bool = True) -> int:
    """Uniform backoff from ``[0, cw]`` (or ``[0, cw-1]``); one RNG draw."""
    if cw < 1:
        raise ValueError(f"cw must be >= 1, got {cw}")
    return int(rng.integers(0, cw + 1 if inclusive else cw))


def default_ac_table(mpr_limit: int, backoff: BackoffConfig | None = None) -> list[AccessCategoryConfig]:
    """Thresholds K-1, ceil(K/2), ceil(K/4), 1; adaptive for AC0/AC1, fixed for AC2/AC3."""
    K = mpr_limit
    if K < 2:
        raise ValueError(f"default AC table needs K >= 2, got K={K}")
    backoff = backoff or BackoffConfig()
    rows = [
        (K - 1, CountdownMode.ADAPTIVE),
        (math.ceil(K / 2), CountdownMode.ADAPTIVE),
        (math.ceil(K / 4), CountdownMode.FIXED_ONE),
        (1, CountdownMode.FIXED_ONE),
    ]
    table = [AccessCategoryConfig(i, kt, mode, backoff) for i, (kt, mode) in enumerate(rows)]
    for ac in table:
        ac.check_against(K)
    return table


@dataclass(eq=False)
class StationState:
    station_id: int
    ac: AccessCategoryConfig
    rng: np.random.Generator
    aifs_slots: int = 3
    saturated: bool = False
    queue_capacity: int | None = None
    counter: int = 0
    stage: int = 0
    retries: int = 0
    idle_run: int = 0
    phase: Phase = Phase.IDLE
    hol_arrival: int | None = None   # slot the head-of-line packet entered the MAC
    hol_since: int | None = None     # slot it became head of line
    queue: deque = field(default_factory=deque)

    @property
    def has_packet(self) -> bool:
        return self.hol_arrival is not None

    def backlog(self) -> int:
        return len(self.queue) + (1 if self.hol_arrival is not None else 0)

    def enqueue(self, slot: int, count: int = 1) -> int:
        """Add ``count`` packets arriving at ``slot``; returns how many were lost to a full queue."""
        lost = 0
        for _ in range(count):
            if self.hol_arrival is None:
                self.hol_arrival = self.hol_since = slot
            elif self.queue_capacity is not None and len(self.queue) >= self.queue_capacity:
                lost += 1
            else:
                self.queue.append(slot)
        return lost

    def _next_packet(self, now: int):
        if self.queue:
            self.hol_arrival = self.queue.popleft()
            self.hol_since = now
        elif self.saturated:
            self.hol_arrival = self.hol_since = now
        else:
            self.hol_arrival = self.hol_since = None

    def redraw(self) -> int:
        b = self.ac.backoff
        self.counter = draw_backoff(self.rng, b.window(self.stage), b.inclusive_window)
        return self.counter


def step_station(st: StationState, sensed: int, mpr_limit: int) -> bool:
    """Advance one non-transmitting station through one slot.

    Returns True when the station starts a frame in this slot.
    """
    if st.phase is Phase.TRANSMITTING:
        raise RuntimeError(f"station {st.station_id} stepped while transmitting")
    ac = st.ac
    idle = sensed <= ac.threshold
    if idle:
        st.idle_run += 1
    else:
        st.idle_run = 0
    A = st.aifs_slots
    aifs_ok = st.idle_run > A

    if st.phase is Phase.IDLE:
        if st.hol_arrival is None:
            return False
        if aifs_ok:
            # medium already idle for AIFS: immediate access, no backoff
            # (an idle station's counter is already nonpositive)
            st.phase = Phase.BACKOFF
            return True
        st.stage = 0
        st.redraw()
        st.phase = Phase.BACKOFF
        return False

    # BACKOFF
    if st.counter > 0 and st.idle_run > A + 1:
        st.counter -= decrement_amount(ac.countdown_mode, mpr_limit, ac.threshold, sensed)
    if st.counter <= 0 and aifs_ok:
        if st.hol_arrival is None:
            st.phase = Phase.IDLE
            return False
        return True
    return False


def start_transmission(st: StationState):
    st.phase = Phase.TRANSMITTING
    st.idle_run = 0


def on_transmission_result(st: StationState, success: bool, now: int):
    """Apply the outcome of the frame that just finished.

    Returns ``("delivered" | "dropped", arrival_slot, hol_since)`` when the
    head-of-line packet left the station, or ``None`` when it will be retried.
    A fresh backoff is always drawn (post-backoff), with or without a next packet.
    """
    if st.phase is not Phase.TRANSMITTING:
        raise RuntimeError(f"station {st.station_id} got a result while not transmitting")
    st.phase = Phase.BACKOFF
    if not success:
        st.retries += 1
        if st.retries <= st.ac.backoff.retry_limit:
            st.stage = min(st.stage + 1, st.ac.backoff.max_backoff_stage)
            st.redraw()
            return None
        outcome = "dropped"
    else:
        outcome = "delivered"
    packet = (outcome, st.hol_arrival, st.hol_since)
    st.stage = 0
    st.retries = 0
    st._next_packet(now)
    st.redraw()
    return packet


def with_cw_min(ac: AccessCategoryConfig, cw_min: int) -> AccessCategoryConfig:
    return replace(ac, backoff=replace(ac.backoff, cw_min=cw_min))
