"""Slotted simulation driver.

Each slot ``t`` runs, in order: arrivals, sensing and station steps, admission
of this slot's starters, then the boundary ``t+1`` where finished frames are
retired and their owners learn the outcome.

Two loops produce identical results. ``run(..., fast=False)`` executes every
slot and is the one that records traces. The default fast loop jumps over
stretches in which the sensed count is constant, no packet arrives and no
station starts a frame; counters and idle runs over such a stretch have a
closed form, so only slots where something happens are stepped one by one.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import math
from dataclasses import dataclass, field

import numpy as np

from mprsim.channel import ChannelConfig, ChannelState
from mprsim.mac import (
    AccessCategoryConfig,
    CountdownMode,
    Phase,
    StationState,
    decrement_amount,
    on_transmission_result,
    start_transmission,
    step_station,
)
from mprsim.metrics import MetricsAccumulator, MetricsReport
from mprsim.traffic import PoissonArrivals, TrafficConfig, TrafficMode, frame_duration_slots

TRACE_FIELDS = ("slot", "L", "arrivals", "dec", "phase", "start", "end", "drop", "draw")


@dataclass(frozen=True)
class TimingConfig:
    slot_us: float = 50.0
    difs_us: float = 128.0

    def __post_init__(self):
        if self.slot_us <= 0:
            raise ValueError("slot_us must be > 0")
        if self.difs_us < 0:
            raise ValueError("difs_us must be >= 0")


@dataclass(frozen=True)
class RunConfig:
    total_slots: int = 1_000_000
    warmup_slots: int = 100_000
    seed: int = 1

    def __post_init__(self):
        if not self.total_slots > self.warmup_slots >= 0:
            raise ValueError(
                f"need total_slots > warmup_slots >= 0 (got {self.total_slots}, {self.warmup_slots})"
            )
        if self.seed < 0:
            raise ValueError("seed must be >= 0")


@dataclass(frozen=True)
class MetricsOptions:
    delay_anchor: str = "arrival"   # or "hol"
    count_headers: bool = False

    def __post_init__(self):
        if self.delay_anchor not in ("arrival", "hol"):
            raise ValueError(f"delay_anchor must be 'arrival' or 'hol', got {self.delay_anchor!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    ac_table: tuple[AccessCategoryConfig, ...] = ()
    stations_per_ac: tuple[int, ...] = (10, 10, 10, 10)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    timing: TimingConfig = field(default_factory=TimingConfig)
    run: RunConfig = field(default_factory=RunConfig)
    metrics: MetricsOptions = field(default_factory=MetricsOptions)

    def validate(self) -> "ScenarioConfig":
        if not self.ac_table:
            raise ValueError("ac_table is empty")
        if len(self.stations_per_ac) != len(self.ac_table):
            raise ValueError(
                f"stations_per_ac has {len(self.stations_per_ac)} entries for {len(self.ac_table)} ACs"
            )
        ids = [ac.ac_id for ac in self.ac_table]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate ac_id in ac_table: {ids}")
        if any(n < 0 for n in self.stations_per_ac):
            raise ValueError("stations_per_ac entries must be >= 0")
        if self.n_stations < 1:
            raise ValueError("scenario has zero stations")
        for ac in self.ac_table:
            ac.check_against(self.channel.mpr_limit)
        return self

    @property
    def n_stations(self) -> int:
        return sum(self.stations_per_ac)

    def aifs_slots(self, ac: AccessCategoryConfig) -> int:
        aifs = self.timing.difs_us if ac.aifs_us is None else ac.aifs_us
        return math.ceil(aifs / self.timing.slot_us - 1e-9)

    def frame_slots(self) -> int:
        return frame_duration_slots(self.traffic, self.channel.bitrate_bps, self.timing.slot_us)


def station_rngs(seed: int, station_id: int):
    """Backoff and arrival streams for one station.

    Keyed by ``(station_id, stream)`` under the master seed, so a station's
    draws do not depend on how many other stations exist.
    """
    backoff = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(station_id, 0)))
    arrivals = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(station_id, 1)))
    return backoff, arrivals


@dataclass
class SimResult:
    report: MetricsReport
    trace: list | None
    stations: list
    channel: ChannelState


class Simulation:
    def __init__(self, cfg: ScenarioConfig, trace: bool = False):
        self.cfg = cfg.validate()
        self.K = cfg.channel.mpr_limit
        self.frame_slots = cfg.frame_slots()
        self.slot_us = cfg.timing.slot_us
        self.warmup = cfg.run.warmup_slots
        self.total = cfg.run.total_slots
        self.ack = cfg.channel.ack_overhead_slots
        self.payload_bits = cfg.traffic.payload_bits
        self.hol_anchor = cfg.metrics.delay_anchor == "hol"
        self.channel = ChannelState(self.K)
        self.metrics = MetricsAccumulator(
            ac_ids=[ac.ac_id for ac in cfg.ac_table],
            bitrate_bps=cfg.channel.bitrate_bps,
            header_bits=cfg.traffic.mac_header_bits + cfg.traffic.phy_header_bits,
            count_headers=cfg.metrics.count_headers,
        )
        self.trace = [] if trace else None
        self.pending = []        # (deliver_slot, station_id, success) when ack overhead > 0
        self.arrival_heap = []   # (slot, station_id)
        self.end_slots = set()   # boundaries at which some frame finishes
        self.counts = dict(arrivals=0, lost=0, delivered=0, dropped=0,
                           frames_started=0, frames_succeeded=0, frames_collided=0)

        saturated = cfg.traffic.mode is TrafficMode.SATURATION
        self.stations = []
        self.sources = []
        sid = 0
        for ac, n in zip(cfg.ac_table, cfg.stations_per_ac):
            aifs = cfg.aifs_slots(ac)
            for _ in range(n):
                b_rng, a_rng = station_rngs(cfg.run.seed, sid)
                st = StationState(sid, ac, b_rng, aifs_slots=aifs, saturated=saturated,
                                  queue_capacity=cfg.traffic.queue_capacity)
                self.stations.append(st)
                if saturated:
                    self.sources.append(None)
                    st.enqueue(0)
                    self.counts["arrivals"] += 1
                    if self.warmup == 0:
                        self.metrics.record_arrival(ac.ac_id, self.payload_bits)
                else:
                    src = PoissonArrivals(a_rng, cfg.traffic.rate_pps, self.slot_us)
                    self.sources.append(src)
                    if src.next_slot != math.inf:
                        heapq.heappush(self.arrival_heap, (src.next_slot, sid))
                sid += 1

        n_max = len(self.stations)
        # per-station (state, threshold, aifs_slots, decrement by L) for the fast loop
        self._fast = []
        for st in self.stations:
            ac = st.ac
            dec = [decrement_amount(ac.countdown_mode, self.K, ac.threshold, L) for L in range(n_max + 1)]
            self._fast.append((st, ac.threshold, st.aifs_slots, dec))

    # -- slot phases -------------------------------------------------------

    def _arrivals(self, t: int, rec):
        heap = self.arrival_heap
        while heap and heap[0][0] == t:
            _, sid = heapq.heappop(heap)
            src = self.sources[sid]
            n = src.pop(t)
            st = self.stations[sid]
            self.counts["arrivals"] += n
            self.counts["lost"] += st.enqueue(t, n)
            if t >= self.warmup:
                self.metrics.record_arrival(st.ac.ac_id, self.payload_bits, n)
            if src.next_slot != math.inf:
                heapq.heappush(heap, (src.next_slot, sid))
            if rec is not None:
                rec.setdefault("arrivals", []).append([sid, n])

    def _slot(self, t: int):
        rec = None
        if self.trace is not None:
            # sparse: event lists appear only when non-empty (see trace_lines)
            rec = {"slot": t}
        self._arrivals(t, rec)
        L = len(self.channel.in_flight)
        K = self.K
        starters = []
        if rec is None:
            for st in self.stations:
                if st.phase is not Phase.TRANSMITTING and step_station(st, L, K):
                    starters.append(st)
        else:
            rec["L"] = L
            for st in self.stations:
                p0 = st.phase
                if p0 is Phase.TRANSMITTING:
                    continue
                if p0 is Phase.IDLE and st.hol_arrival is None:
                    # nothing to record; only the idle run moves
                    st.idle_run = st.idle_run + 1 if L <= st.ac.threshold else 0
                    continue
                c0 = st.counter
                go = step_station(st, L, K)
                if p0 is Phase.IDLE and st.phase is Phase.BACKOFF and not go:
                    rec.setdefault("draw", []).append([st.station_id, st.counter])
                elif st.counter != c0:
                    rec.setdefault("dec", []).append([st.station_id, st.counter - c0])
                if go:
                    starters.append(st)
                elif st.phase is not p0:
                    rec.setdefault("phase", []).append([st.station_id, st.phase.value])
        if starters:
            ch = self.channel
            ch.slot = t
            ch.admit_transmissions([(st.station_id, st.ac.ac_id) for st in starters], self.frame_slots)
            self.end_slots.add(t + self.frame_slots)
            for st in starters:
                start_transmission(st)
                if rec is not None:
                    rec.setdefault("start", []).append([st.station_id, st.ac.ac_id])
            self.counts["frames_started"] += len(starters)
        if rec is not None:
            self.trace.append(rec)

    def _boundary(self, t: int):
        """Retire frames ending at ``t`` and hand out any outcomes due at ``t``."""
        ch = self.channel
        rec = self.trace[-1] if self.trace else None
        if t in self.end_slots:
            self.end_slots.discard(t)
            ch.slot = t
            for sid, ac_id, ok in ch.retire_completions():
                self.counts["frames_succeeded" if ok else "frames_collided"] += 1
                if rec is not None:
                    rec.setdefault("end", []).append([sid, ac_id, ok])
                if self.ack:
                    self.pending.append((t + self.ack, sid, ok))
                else:
                    self._deliver(t, sid, ok, rec)
        if self.pending and self.pending[0][0] == t:
            due = [p for p in self.pending if p[0] == t]
            self.pending = [p for p in self.pending if p[0] != t]
            for _, sid, ok in due:
                self._deliver(t, sid, ok, rec)

    def _deliver(self, t: int, sid: int, ok: bool, rec):
        st = self.stations[sid]
        out = on_transmission_result(st, ok, t)
        if rec is not None:
            rec.setdefault("draw", []).append([sid, st.counter])
        if out is None:
            return
        kind, arrived, hol_since = out
        ac_id = st.ac.ac_id
        self.counts[kind] += 1
        if st.saturated:
            self.counts["arrivals"] += 1
            if t >= self.warmup:
                self.metrics.record_arrival(ac_id, self.payload_bits)
        if kind == "dropped":
            if rec is not None:
                rec.setdefault("drop", []).append(sid)
            if t > self.warmup:
                self.metrics.record_drop(ac_id)
        elif t > self.warmup:
            anchor = hol_since if self.hol_anchor else arrived
            self.metrics.record_delivery(ac_id, anchor * self.slot_us, t * self.slot_us, self.payload_bits)

    # -- fast loop helpers -------------------------------------------------

    def _next_start(self, t: int, L: int) -> float:
        """Earliest slot >= t in which some station would start, if L stays constant."""
        best = math.inf
        for st, thr, A, dec in self._fast:
            if st.hol_arrival is None or st.phase is Phase.TRANSMITTING:
                continue
            if st.phase is Phase.IDLE:
                return t  # a packet is waiting for its access decision
            if L > thr:
                continue
            c = st.counter
            r0 = st.idle_run
            if c <= 0:
                j = A - r0 if r0 < A else 0
            else:
                d = dec[L]
                j = (A + 1 - r0 if r0 < A + 1 else 0) + (c + d - 1) // d - 1
            if t + j < best:
                best = t + j
        return best

    def _advance(self, t: int, b: int, L: int):
        """Apply slots [t, b) in closed form; nobody starts and nothing arrives there."""
        n = b - t
        for st, thr, A, dec in self._fast:
            if st.phase is Phase.TRANSMITTING:
                continue
            if L > thr:
                st.idle_run = 0
                continue
            r0 = st.idle_run
            st.idle_run = r0 + n
            if st.phase is Phase.BACKOFF:
                c = st.counter
                if c > 0:
                    cd = n - (A + 1 - r0 if r0 < A + 1 else 0)
                    if cd > 0:
                        d = dec[L]
                        q = (c + d - 1) // d
                        c -= d * (cd if cd < q else q)
                        st.counter = c
                if c <= 0 and st.hol_arrival is None and r0 + n > A:
                    st.phase = Phase.IDLE

    # -- drivers -----------------------------------------------------------

    def _run_slots(self):
        for t in range(self.total):
            self._slot(t)
            self._boundary(t + 1)

    def _run_fast(self):
        T = self.total
        ch = self.channel
        heap = self.arrival_heap
        t = 0
        while t < T:
            L = len(ch.in_flight)
            e = self._next_start(t, L)
            if heap and heap[0][0] < e:
                e = heap[0][0]
            nb = math.inf
            if ch.in_flight:
                nb = min(tx.end_slot for tx in ch.in_flight.values())
            if self.pending:
                nb = min(nb, self.pending[0][0])
            if nb <= e and nb <= T:
                if nb > t:
                    self._advance(t, nb, L)
                t = nb
                self._boundary(t)
                continue
            if e >= T:
                self._advance(t, T, L)
                t = T
                break
            if e > t:
                self._advance(t, e, L)
                t = e
            self._slot(t)
            t += 1
            self._boundary(t)

    def run(self, fast: bool = True) -> SimResult:
        if self.trace is not None or not fast:
            self._run_slots()
        else:
            self._run_fast()
        counts = dict(self.counts)
        counts["backlog"] = sum(st.backlog() for st in self.stations)
        counts["in_flight"] = len(self.channel.in_flight)
        counts["pending_results"] = len(self.pending)
        observed = (self.total - self.warmup) * self.slot_us
        report = self.metrics.finalize(observed, counts)
        return SimResult(report, self.trace, self.stations, self.channel)


def run(cfg: ScenarioConfig, trace: bool = False, fast: bool = True):
    """Simulate ``cfg``; returns ``(MetricsReport, trace or None)``."""
    res = Simulation(cfg, trace=trace).run(fast=fast)
    return res.report, res.trace


def dcf_baseline_config(cfg: ScenarioConfig) -> ScenarioConfig:
    """Collapse ``cfg`` to classical DCF: K=1, one AC, threshold 0, decrement by one."""
    from dataclasses import replace

    if cfg.channel.mpr_limit != 1:
        raise ValueError(f"DCF baseline needs K=1, got K={cfg.channel.mpr_limit}")
    if len(cfg.ac_table) != 1:
        raise ValueError("DCF baseline needs a single access category")
    ac = replace(cfg.ac_table[0], threshold=0, countdown_mode=CountdownMode.FIXED_ONE)
    return replace(cfg, ac_table=(ac,))


def run_dcf_baseline(cfg: ScenarioConfig):
    report, trace = run(dcf_baseline_config(cfg), trace=True)
    return report, trace


# -- trace export ----------------------------------------------------------

_EMPTY = ()


def trace_lines(trace):
    for rec in trace:
        yield json.dumps({k: rec.get(k, _EMPTY) for k in TRACE_FIELDS}, separators=(",", ":"))


def write_trace(trace, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in trace_lines(trace):
            fh.write(line)
            fh.write("\n")


def trace_digest(trace) -> str:
    h = hashlib.sha256()
    for line in trace_lines(trace):
        h.update(line.encode())
        h.update(b"\n")
    return h.hexdigest()
