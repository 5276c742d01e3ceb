"""Scenario files: YAML key/value trees resolved into :class:`ScenarioConfig`.

Every key is optional; omitted keys take the defaults below. The access
category table defaults to the threshold formulas for the configured K. A
top-level ``derived`` section is written by :func:`dump_scenario` for
information only and ignored when read back.

.. code-block:: yaml

    channel: {mpr_limit: 8, bitrate_bps: 1000000.0, ack_overhead_slots: 0}
    backoff: {cw_min: 16, max_backoff_stage: 5, retry_limit: 4, window: inclusive}
    access_categories:            # optional explicit table
      - {ac_id: 0, threshold: 7, countdown: adaptive}
    stations_per_ac: [10, 10, 10, 10]   # or n_stations: 40
    traffic: {mode: poisson, normalized_load: 2.0}   # or rate_pps, or mode: saturation
    timing: {slot_us: 50.0, difs_us: 128.0}
    run: {total_slots: 1000000, warmup_slots: 100000, seed: 1}
    metrics: {delay_anchor: arrival, count_headers: false}
"""

from __future__ import annotations

import copy

import yaml

from mprsim.channel import ChannelConfig
from mprsim.engine import MetricsOptions, RunConfig, ScenarioConfig, TimingConfig
from mprsim.mac import AccessCategoryConfig, BackoffConfig, CountdownMode, default_ac_table
from mprsim.traffic import (
    TrafficConfig,
    TrafficMode,
    frame_airtime_us,
    normalized_offered_load,
    rate_for_load,
)

SECTIONS = {
    "channel": {"mpr_limit", "bitrate_bps", "ack_overhead_slots"},
    "backoff": {"cw_min", "max_backoff_stage", "retry_limit", "window"},
    "traffic": {"mode", "rate_pps", "normalized_load", "payload_bits", "mac_header_bits",
                "phy_header_bits", "queue_capacity"},
    "timing": {"slot_us", "difs_us"},
    "run": {"total_slots", "warmup_slots", "seed"},
    "metrics": {"delay_anchor", "count_headers"},
}
TOP_LEVEL = set(SECTIONS) | {"access_categories", "stations_per_ac", "n_stations", "derived"}
AC_KEYS = {"ac_id", "threshold", "countdown", "cw_min", "max_backoff_stage", "retry_limit",
           "window", "aifs_us"}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        self.source = source
        self.message = message
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


def _line_map(text: str) -> dict:
    """Map key paths (tuples) to 1-based line numbers."""
    lines = {}

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = path + (k.value,)
                lines[p] = k.start_mark.line + 1
                walk(v, p)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                lines[path + (i,)] = v.start_mark.line + 1
                walk(v, path + (i,))

    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return lines
    if root is not None:
        walk(root, ())
    return lines


class _Resolver:
    def __init__(self, raw: dict, lines: dict, source: str):
        self.raw = raw
        self.lines = lines
        self.source = source

    def fail(self, path, message):
        path = tuple(path)
        line = None
        while path and line is None:
            line = self.lines.get(path)
            path = path[:-1]
        raise ConfigError(message, line, self.source)

    def section(self, name):
        sec = self.raw.get(name) or {}
        if not isinstance(sec, dict):
            self.fail((name,), f"'{name}' must be a mapping")
        unknown = set(sec) - SECTIONS[name]
        if unknown:
            key = sorted(unknown, key=str)[0]
            self.fail((name, key), f"unknown key '{name}.{key}'")
        return sec

    def get(self, sec, section_name, key, kind, default):
        value = sec.get(key, default)
        if value is None:
            return None
        try:
            if kind is int:
                if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                    raise TypeError
                return int(value)
            if kind is float:
                if isinstance(value, bool):
                    raise TypeError
                return float(value)
            if kind is bool:
                if not isinstance(value, bool):
                    raise TypeError
                return value
            return kind(value)
        except (TypeError, ValueError):
            self.fail((section_name, key), f"'{section_name}.{key}' has invalid value {value!r}")

    def build(self, ctor, path, **kwargs):
        try:
            return ctor(**kwargs)
        except ValueError as exc:
            self.fail(path, str(exc))

    def resolve(self) -> ScenarioConfig:
        raw = self.raw
        if not isinstance(raw, dict):
            raise ConfigError("top level must be a mapping", 1, self.source)
        for key in raw:
            if key not in TOP_LEVEL:
                self.fail((key,), f"unknown key '{key}'")

        c = self.section("channel")
        channel = self.build(
            ChannelConfig, ("channel",),
            mpr_limit=self.get(c, "channel", "mpr_limit", int, 8),
            bitrate_bps=self.get(c, "channel", "bitrate_bps", float, 1e6),
            ack_overhead_slots=self.get(c, "channel", "ack_overhead_slots", int, 0),
        )
        K = channel.mpr_limit

        b = self.section("backoff")
        window = b.get("window", "inclusive")
        if window not in ("inclusive", "exclusive"):
            self.fail(("backoff", "window"), "backoff.window must be 'inclusive' or 'exclusive'")
        backoff = self.build(
            BackoffConfig, ("backoff",),
            cw_min=self.get(b, "backoff", "cw_min", int, 16),
            max_backoff_stage=self.get(b, "backoff", "max_backoff_stage", int, 5),
            retry_limit=self.get(b, "backoff", "retry_limit", int, 4),
            inclusive_window=window == "inclusive",
        )

        acs = raw.get("access_categories")
        if acs is None:
            try:
                ac_table = tuple(default_ac_table(K, backoff))
            except ValueError as exc:
                self.fail(("channel", "mpr_limit"), str(exc))
        else:
            if not isinstance(acs, list) or not acs:
                self.fail(("access_categories",), "access_categories must be a non-empty list")
            ac_table = tuple(self._ac(i, entry, backoff, K) for i, entry in enumerate(acs))

        timing_sec = self.section("timing")
        timing = self.build(
            TimingConfig, ("timing",),
            slot_us=self.get(timing_sec, "timing", "slot_us", float, 50.0),
            difs_us=self.get(timing_sec, "timing", "difs_us", float, 128.0),
        )

        if "stations_per_ac" in raw and "n_stations" in raw:
            self.fail(("n_stations",), "give either stations_per_ac or n_stations, not both")
        if "stations_per_ac" in raw:
            spa = raw["stations_per_ac"]
            if not isinstance(spa, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in spa):
                self.fail(("stations_per_ac",), "stations_per_ac must be a list of integers")
            stations = tuple(spa)
        else:
            n = raw.get("n_stations", 40)
            if not isinstance(n, int) or isinstance(n, bool) or n < 1:
                self.fail(("n_stations",), f"n_stations must be a positive integer, got {n!r}")
            stations = split_stations(n, len(ac_table))
        if len(stations) != len(ac_table):
            self.fail(("stations_per_ac",),
                      f"stations_per_ac has {len(stations)} entries for {len(ac_table)} access categories")
        if any(x < 0 for x in stations) or sum(stations) < 1:
            self.fail(("stations_per_ac",), "stations_per_ac needs nonnegative counts with at least one station")

        t = self.section("traffic")
        mode_name = t.get("mode", "saturation")
        try:
            mode = TrafficMode(mode_name)
        except ValueError:
            self.fail(("traffic", "mode"), f"traffic.mode must be 'poisson' or 'saturation', got {mode_name!r}")
        common = dict(
            payload_bits=self.get(t, "traffic", "payload_bits", int, 8184),
            mac_header_bits=self.get(t, "traffic", "mac_header_bits", int, 272),
            phy_header_bits=self.get(t, "traffic", "phy_header_bits", int, 128),
            queue_capacity=self.get(t, "traffic", "queue_capacity", int, None),
        )
        rate = 0.0
        if mode is TrafficMode.POISSON:
            if "rate_pps" in t and "normalized_load" in t:
                self.fail(("traffic", "normalized_load"), "give either traffic.rate_pps or traffic.normalized_load")
            if "normalized_load" in t:
                load = self.get(t, "traffic", "normalized_load", float, 0.0)
                if load < 0:
                    self.fail(("traffic", "normalized_load"), "traffic.normalized_load must be >= 0")
                probe = self.build(TrafficConfig, ("traffic",), mode=mode, **common)
                rate = rate_for_load(load, sum(stations), frame_airtime_us(probe.frame_bits, channel.bitrate_bps))
            else:
                rate = self.get(t, "traffic", "rate_pps", float, 0.0)
        traffic = self.build(TrafficConfig, ("traffic",), mode=mode, rate_pps=rate, **common)

        r = self.section("run")
        total = self.get(r, "run", "total_slots", int, 1_000_000)
        warm = self.get(r, "run", "warmup_slots", int, total // 10 if total else 0)
        run_cfg = self.build(RunConfig, ("run",), total_slots=total, warmup_slots=warm,
                             seed=self.get(r, "run", "seed", int, 1))

        m = self.section("metrics")
        metrics = self.build(
            MetricsOptions, ("metrics",),
            delay_anchor=m.get("delay_anchor", "arrival"),
            count_headers=self.get(m, "metrics", "count_headers", bool, False),
        )

        cfg = ScenarioConfig(channel, ac_table, stations, traffic, timing, run_cfg, metrics)
        try:
            return cfg.validate()
        except ValueError as exc:
            self.fail(("access_categories",), str(exc))

    def _ac(self, i, entry, backoff, K):
        path = ("access_categories", i)
        if not isinstance(entry, dict):
            self.fail(path, "each access category must be a mapping")
        unknown = set(entry) - AC_KEYS
        if unknown:
            key = sorted(unknown, key=str)[0]
            self.fail(path + (key,), f"unknown access category key '{key}'")
        name = f"access_categories[{i}]"
        countdown = entry.get("countdown", "adaptive")
        try:
            mode = CountdownMode(countdown)
        except ValueError:
            self.fail(path + ("countdown",), f"{name}.countdown must be 'adaptive' or 'fixed', got {countdown!r}")
        window = entry.get("window", "inclusive" if backoff.inclusive_window else "exclusive")
        if window not in ("inclusive", "exclusive"):
            self.fail(path + ("window",), f"{name}.window must be 'inclusive' or 'exclusive'")
        bo = self.build(
            BackoffConfig, path,
            cw_min=self.get(entry, name, "cw_min", int, backoff.cw_min),
            max_backoff_stage=self.get(entry, name, "max_backoff_stage", int, backoff.max_backoff_stage),
            retry_limit=self.get(entry, name, "retry_limit", int, backoff.retry_limit),
            inclusive_window=window == "inclusive",
        )
        if "threshold" not in entry:
            self.fail(path, f"{name} needs a threshold")
        threshold = entry["threshold"]
        if not isinstance(threshold, int) or isinstance(threshold, bool):
            self.fail(path + ("threshold",), f"{name}.threshold must be an integer")
        if threshold >= K:
            self.fail(path + ("threshold",), f"{name}: threshold must be < K (threshold={threshold}, K={K})")
        aifs = entry.get("aifs_us")
        ac = self.build(
            AccessCategoryConfig, path,
            ac_id=self.get(entry, name, "ac_id", int, i),
            threshold=threshold,
            countdown_mode=mode,
            backoff=bo,
            aifs_us=None if aifs is None else self.get(entry, name, "aifs_us", float, None),
        )
        return ac


def split_stations(n: int, n_acs: int = 4) -> tuple[int, ...]:
    """Divide ``n`` stations as evenly as possible; lower AC ids take the remainder."""
    base, extra = divmod(n, n_acs)
    return tuple(base + (1 if i < extra else 0) for i in range(n_acs))


def resolve(raw: dict, text: str | None = None, source: str = "<config>") -> ScenarioConfig:
    lines = _line_map(text) if text is not None else {}
    return _Resolver(raw or {}, lines, source).resolve()


def load_text(text: str, source: str = "<config>") -> dict:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"YAML parse error: {getattr(exc, 'problem', exc)}", line, source) from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping", 1, source)
    return raw


def parse_scenario(text: str, source: str = "<config>", overrides: dict | None = None) -> ScenarioConfig:
    raw = load_text(text, source)
    if overrides:
        raw = apply_overrides(raw, overrides)
    return resolve(raw, text, source)


def load_scenario(path, overrides: dict | None = None) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_scenario(text, str(path), overrides)


def apply_overrides(raw: dict, overrides: dict) -> dict:
    """Return a copy of ``raw`` with dotted-path overrides (``"run.seed": 3``) applied."""
    raw = copy.deepcopy(raw)
    for dotted, value in overrides.items():
        node = raw
        *parents, leaf = dotted.split(".")
        for p in parents:
            if not isinstance(node.get(p), dict):
                node[p] = {}
            node = node[p]
        node[leaf] = value
    return raw


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    """Fully resolved scenario as plain data (every default made explicit)."""
    ch, tr, tm, rn, me = cfg.channel, cfg.traffic, cfg.timing, cfg.run, cfg.metrics
    acs = []
    for ac in cfg.ac_table:
        b = ac.backoff
        acs.append({
            "ac_id": ac.ac_id,
            "threshold": ac.threshold,
            "countdown": ac.countdown_mode.value,
            "cw_min": b.cw_min,
            "max_backoff_stage": b.max_backoff_stage,
            "retry_limit": b.retry_limit,
            "window": "inclusive" if b.inclusive_window else "exclusive",
            "aifs_us": ac.aifs_us,
        })
    traffic = {"mode": tr.mode.value}
    if tr.mode is TrafficMode.POISSON:
        traffic["rate_pps"] = tr.rate_pps
    traffic.update(payload_bits=tr.payload_bits, mac_header_bits=tr.mac_header_bits,
                   phy_header_bits=tr.phy_header_bits, queue_capacity=tr.queue_capacity)
    frame_us = frame_airtime_us(tr.frame_bits, ch.bitrate_bps)
    derived = {
        "n_stations": cfg.n_stations,
        "thresholds": [ac.threshold for ac in cfg.ac_table],
        "aifs_slots": [cfg.aifs_slots(ac) for ac in cfg.ac_table],
        "frame_us": frame_us,
        "frame_slots": cfg.frame_slots(),
    }
    if tr.mode is TrafficMode.POISSON:
        derived["normalized_load"] = normalized_offered_load(tr.rate_pps, cfg.n_stations, frame_us)
    return {
        "channel": {"mpr_limit": ch.mpr_limit, "bitrate_bps": ch.bitrate_bps,
                    "ack_overhead_slots": ch.ack_overhead_slots},
        "access_categories": acs,
        "stations_per_ac": list(cfg.stations_per_ac),
        "traffic": traffic,
        "timing": {"slot_us": tm.slot_us, "difs_us": tm.difs_us},
        "run": {"total_slots": rn.total_slots, "warmup_slots": rn.warmup_slots, "seed": rn.seed},
        "metrics": {"delay_anchor": me.delay_anchor, "count_headers": me.count_headers},
        "derived": derived,
    }


def dump_scenario(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(scenario_to_dict(cfg), sort_keys=False, default_flow_style=None, width=100)
