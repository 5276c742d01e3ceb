import math
from dataclasses import replace

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from mprsim.config import resolve
from mprsim.engine import (
    TRACE_FIELDS,
    Simulation,
    dcf_baseline_config,
    run,
    run_dcf_baseline,
    station_rngs,
    trace_digest,
    trace_lines,
)
from mprsim.mac import Phase

SLOT_US = 50.0
PAYLOAD_US = 8184.0
D = 172  # frame slots
A = 3    # ceil(128 / 50)


def single_station(cw, slots, seed=1):
    return resolve({
        "channel": {"mpr_limit": 1},
        "access_categories": [{"ac_id": 0, "threshold": 0, "countdown": "fixed", "cw_min": cw}],
        "stations_per_ac": [1],
        "traffic": {"mode": "saturation"},
        "run": {"total_slots": slots, "seed": seed},
    })


def starts(trace):
    return [(rec["slot"], sid) for rec in trace for sid, _ in rec.get("start", ())]


# -- closed-form single-station renewal cycle --------------------------------

@pytest.mark.parametrize("cw", [1, 16, 50])
def test_single_station_gaps_bounded(cw):
    _, trace = run(single_station(cw, 30_000), trace=True)
    t = [s for s, _ in starts(trace)]
    gaps = [b - a for a, b in zip(t, t[1:])]
    assert gaps and all(D + A <= g <= D + A + cw for g in gaps)


@pytest.mark.parametrize("cw", [16, 50])
def test_single_station_closed_form(cw):
    report, _ = run(single_station(cw, 2_000_000, seed=3))
    m = report.ac(0)
    cycle_slots = D + A + cw / 2
    assert m.throughput == pytest.approx(PAYLOAD_US / (cycle_slots * SLOT_US), rel=0.005)
    assert m.mean_delay_us == pytest.approx(cycle_slots * SLOT_US, rel=0.005)
    var_b = ((cw + 1) ** 2 - 1) / 12
    assert m.jitter_us2 == pytest.approx(var_b * SLOT_US**2, rel=0.05)
    assert report.counts["frames_collided"] == 0


def test_single_station_throughput_matches_trace_count():
    cfg = single_station(16, 50_000)
    report, trace = run(cfg, trace=True)
    w = cfg.run.warmup_slots
    ok = sum(1 for rec in trace if rec["slot"] + 1 > w for _, _, s in rec.get("end", ()) if s)
    observed = (cfg.run.total_slots - w) * SLOT_US
    assert report.aggregate.delivered == ok
    assert report.aggregate.throughput == pytest.approx(ok * PAYLOAD_US / observed, rel=1e-12)


def test_two_stations_under_k8_never_collide():
    cfg = resolve({
        "channel": {"mpr_limit": 8},
        "access_categories": [{"ac_id": 0, "threshold": 7, "countdown": "adaptive"}],
        "stations_per_ac": [2],
        "traffic": {"mode": "saturation"},
        "run": {"total_slots": 200_000},
    })
    report, _ = run(cfg)
    assert report.counts["frames_collided"] == 0
    assert report.aggregate.dropped == 0
    assert report.counts["frames_succeeded"] > 1000


def test_empty_traffic_never_transmits():
    cfg = resolve({"n_stations": 8, "traffic": {"mode": "poisson", "rate_pps": 0.0},
                   "run": {"total_slots": 5000}})
    report, trace = run(cfg, trace=True)
    assert starts(trace) == []
    assert report.counts["frames_started"] == 0
    assert report.aggregate.throughput == 0.0


def test_seed_determinism():
    cfg = resolve({"n_stations": 12, "traffic": {"mode": "poisson", "normalized_load": 3.0},
                   "run": {"total_slots": 20_000, "seed": 42}})
    r1, t1 = run(cfg, trace=True)
    r2, t2 = run(cfg, trace=True)
    assert r1 == r2
    assert trace_digest(t1) == trace_digest(t2)
    r3, t3 = run(replace(cfg, run=replace(cfg.run, seed=43)), trace=True)
    assert trace_digest(t1) != trace_digest(t3)


def test_station_streams_independent_of_population():
    a1, _ = station_rngs(7, 3)
    a2, _ = station_rngs(7, 3)
    b, c = station_rngs(7, 4)
    x = a1.integers(0, 1 << 40, 5).tolist()
    assert x == a2.integers(0, 1 << 40, 5).tolist()
    assert x != b.integers(0, 1 << 40, 5).tolist()


def test_trace_lines_stable_field_order():
    cfg = resolve({"n_stations": 4, "traffic": {"mode": "saturation"}, "run": {"total_slots": 400}})
    _, trace = run(cfg, trace=True)
    import json
    lines = list(trace_lines(trace))
    assert len(lines) == 400
    for i, line in enumerate(lines):
        rec = json.loads(line)
        assert tuple(rec) == TRACE_FIELDS
        assert rec["slot"] == i


def test_invalid_scenario_rejected_before_running():
    cfg = resolve({"n_stations": 4})
    bad = replace(cfg, stations_per_ac=(0, 0, 0, 0))
    with pytest.raises(ValueError, match="zero stations"):
        Simulation(bad)


def test_dcf_baseline_requires_k1():
    with pytest.raises(ValueError):
        dcf_baseline_config(resolve({"n_stations": 4}))


def test_dcf_baseline_runs():
    cfg = resolve({
        "channel": {"mpr_limit": 1},
        "access_categories": [{"ac_id": 0, "threshold": 0, "countdown": "adaptive"}],
        "stations_per_ac": [3],
        "traffic": {"mode": "saturation"},
        "run": {"total_slots": 20_000},
    })
    r_base, t_base = run_dcf_baseline(cfg)
    r_ada, t_ada = run(cfg, trace=True)
    assert t_base == t_ada and r_base == r_ada


# -- random scenarios --------------------------------------------------------

@st.composite
def scenarios(draw):
    K = draw(st.integers(1, 5))
    mode = draw(st.sampled_from(["poisson", "saturation"]))
    raw = {
        "channel": {"mpr_limit": K, "ack_overhead_slots": draw(st.integers(0, 2))},
        "backoff": {
            "cw_min": draw(st.sampled_from([1, 2, 4, 8, 16])),
            "max_backoff_stage": draw(st.integers(0, 3)),
            "retry_limit": draw(st.integers(0, 3)),
            "window": draw(st.sampled_from(["inclusive", "exclusive"])),
        },
        "traffic": {"mode": mode, "payload_bits": draw(st.integers(1, 600)),
                    "mac_header_bits": 0, "phy_header_bits": 0},
        "timing": {"difs_us": draw(st.sampled_from([0.0, 50.0, 128.0]))},
        "run": {"total_slots": 1500, "warmup_slots": draw(st.integers(0, 300)),
                "seed": draw(st.integers(0, 10_000))},
        "metrics": {"delay_anchor": draw(st.sampled_from(["arrival", "hol"]))},
    }
    if mode == "poisson":
        raw["traffic"]["normalized_load"] = draw(st.sampled_from([0.0, 0.3, 1.0, 3.0]))
        if draw(st.booleans()):
            raw["traffic"]["queue_capacity"] = draw(st.integers(0, 3))
    if K == 1:
        raw["access_categories"] = [{"ac_id": 0, "threshold": 0,
                                     "countdown": draw(st.sampled_from(["adaptive", "fixed"]))}]
        raw["stations_per_ac"] = [draw(st.integers(1, 6))]
    else:
        counts = draw(st.lists(st.integers(0, 3), min_size=4, max_size=4).filter(lambda c: sum(c) > 0))
        raw["stations_per_ac"] = counts
    return resolve(raw)


SETTINGS = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])


def _snapshot(sim):
    return [(s.counter, s.stage, s.retries, s.idle_run, s.phase, s.hol_arrival, s.hol_since,
             tuple(s.queue)) for s in sim.stations]


@SETTINGS
@given(scenarios())
def test_fast_loop_matches_slot_loop(cfg):
    fast = Simulation(cfg)
    slow = Simulation(cfg)
    rf = fast.run(fast=True)
    rs = slow.run(fast=False)
    assert rf.report == rs.report
    assert _snapshot(fast) == _snapshot(slow)


@SETTINGS
@given(scenarios())
def test_trace_properties(cfg):
    sim = Simulation(cfg, trace=True)
    on_air = {}
    thr = {}
    for s in sim.stations:
        thr[s.station_id] = s.ac.threshold
    for t in range(cfg.run.total_slots):
        sim._slot(t)
        sim._boundary(t + 1)
        for s in sim.stations:
            b = s.ac.backoff
            assert 0 <= s.stage <= b.max_backoff_stage
            assert 0 <= s.retries <= b.retry_limit
        rec = sim.trace[-1]
        for sid, delta in rec.get("dec", ()):
            # freeze correctness and monotone countdown
            assert rec["L"] <= thr[sid]
            assert delta < 0
        for sid, counter in rec.get("draw", ()):
            b = sim.stations[sid].ac.backoff
            assert 0 <= counter <= b.cw_max
        for sid, _ in rec.get("start", ()):
            assert sid not in on_air, "half-duplex violated"
            on_air[sid] = t
        for sid, _, _ in rec.get("end", ()):
            assert t + 1 - on_air.pop(sid) == sim.frame_slots
        assert len(sim.channel.in_flight) == len(on_air)
    c = sim.counts
    assert c["frames_started"] == c["frames_succeeded"] + c["frames_collided"] + len(on_air)


@SETTINGS
@given(scenarios())
def test_conservation_and_payload_accounting(cfg):
    report, trace = run(cfg, trace=True)
    c = report.counts
    assert c["arrivals"] == c["delivered"] + c["dropped"] + c["lost"] + c["backlog"]
    assert c["frames_started"] == c["frames_succeeded"] + c["frames_collided"] + c["in_flight"]
    assert report.aggregate.throughput <= cfg.channel.mpr_limit
    assert sum(m.delivered for m in report.per_ac) == report.aggregate.delivered
    if cfg.channel.ack_overhead_slots == 0:
        w = cfg.run.warmup_slots
        ok = sum(1 for rec in trace if rec["slot"] + 1 > w for _, _, s in rec.get("end", ()) if s)
        assert report.aggregate.delivered == ok
        bits = report.aggregate.throughput * report.observed_duration_us * cfg.channel.bitrate_bps / 1e6
        assert bits == pytest.approx(ok * cfg.traffic.payload_bits, rel=1e-9, abs=1e-6)
    for m in report.per_ac:
        assert m.throughput >= 0
        assert m.jitter_us2 is None or m.jitter_us2 >= 0
