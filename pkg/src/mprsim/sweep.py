"""Parameter sweeps, CSV output and the throughput / delay / jitter experiments."""

from __future__ import annotations

import csv
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from mprsim.config import ConfigError, apply_overrides, load_text, resolve, split_stations
from mprsim.engine import run
from mprsim.metrics import MetricsReport

CSV_COLUMNS = ("scenario_id", "seed", "param_value", "ac_id", "throughput",
               "mean_delay_us", "jitter_us2", "delivered", "dropped")
SUMMARY_COLUMNS = ("scenario_id", "param_value", "ac_id", "replications",
                   "throughput_mean", "throughput_se", "mean_delay_us_mean", "mean_delay_us_se",
                   "jitter_us2_mean", "jitter_us2_se")
PARAMETERS = ("cw_min", "normalized_offered_load", "K", "N", "seed")


@dataclass
class SweepSpec:
    name: str
    base: dict                      # raw scenario tree, resolved per point
    parameter: str
    values: list
    replications: int = 10
    seed: int = 1                   # replication r runs with seed + r

    def __post_init__(self):
        if self.parameter not in PARAMETERS:
            raise ValueError(f"unknown sweep parameter {self.parameter!r}; expected one of {PARAMETERS}")
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        for v in self.values:
            _check_value(self.parameter, v)

    def seeds(self) -> list[int]:
        return [self.seed + r for r in range(self.replications)]

    def scenario_id(self, value) -> str:
        return f"{self.name}:{self.parameter}={value}"

    def point_raw(self, value, seed: int) -> dict:
        raw = apply_overrides(self.base, {"run.seed": seed})
        return override_parameter(raw, self.parameter, value)


def _check_value(parameter, v):
    bad = isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v)
    if not bad:
        if parameter in ("cw_min", "K", "N"):
            bad = not float(v).is_integer() or v < 1
        elif parameter == "seed":
            bad = not float(v).is_integer() or v < 0
        else:
            bad = v < 0
    if bad:
        raise ValueError(f"invalid {parameter} sweep value: {v!r}")


def override_parameter(raw: dict, parameter: str, value) -> dict:
    if parameter == "cw_min":
        raw = apply_overrides(raw, {"backoff.cw_min": int(value)})
        if raw.get("access_categories"):
            for ac in raw["access_categories"]:
                ac["cw_min"] = int(value)
        return raw
    if parameter == "normalized_offered_load":
        raw = apply_overrides(raw, {"traffic.mode": "poisson", "traffic.normalized_load": float(value)})
        raw["traffic"].pop("rate_pps", None)
        return raw
    if parameter == "K":
        return apply_overrides(raw, {"channel.mpr_limit": int(value)})
    if parameter == "N":
        raw = apply_overrides(raw, {})
        n_acs = len(raw.get("access_categories") or []) or 4
        raw.pop("n_stations", None)
        raw["stations_per_ac"] = list(split_stations(int(value), n_acs))
        return raw
    if parameter == "seed":
        return apply_overrides(raw, {"run.seed": int(value)})
    raise ValueError(f"unknown sweep parameter {parameter!r}")


@dataclass
class PointResult:
    value: object
    seed: int
    report: MetricsReport


@dataclass
class SweepResult:
    spec: SweepSpec
    points: list = field(default_factory=list)

    def rows(self) -> list[dict]:
        rows = []
        for p in self.points:
            for m in p.report.per_ac:
                rows.append({
                    "scenario_id": self.spec.scenario_id(p.value),
                    "seed": p.seed,
                    "param_value": p.value,
                    "ac_id": m.ac_id,
                    "throughput": m.throughput,
                    "mean_delay_us": m.mean_delay_us,
                    "jitter_us2": m.jitter_us2,
                    "delivered": m.delivered,
                    "dropped": m.dropped,
                })
        rows.sort(key=lambda r: (r["param_value"], r["ac_id"], r["seed"]))
        return rows

    def summary(self) -> list[dict]:
        groups = {}
        for r in self.rows():
            groups.setdefault((r["param_value"], r["ac_id"]), []).append(r)
        out = []
        for (value, ac), rs in sorted(groups.items()):
            row = {"scenario_id": self.spec.scenario_id(value), "param_value": value,
                   "ac_id": ac, "replications": len(rs)}
            for col in ("throughput", "mean_delay_us", "jitter_us2"):
                mean, se = mean_se([r[col] for r in rs if r[col] is not None])
                row[f"{col}_mean"] = mean
                row[f"{col}_se"] = se
            out.append(row)
        return out

    def reports(self, value) -> list[MetricsReport]:
        return [p.report for p in self.points if p.value == value]


def mean_se(xs):
    """Mean and standard error of the mean (None when undefined)."""
    xs = list(xs)
    if not xs:
        return None, None
    if len(xs) == 1:
        return xs[0], None
    return statistics.fmean(xs), statistics.stdev(xs) / math.sqrt(len(xs))


def _run_point(args):
    raw, value, seed, source = args
    cfg = resolve(raw, source=source)
    report, _ = run(cfg)
    return PointResult(value, seed, report)


def run_sweep(spec: SweepSpec, jobs: int = 1, progress=None) -> SweepResult:
    """Run every (value, seed) point; results are ordered independently of ``jobs``."""
    tasks = []
    for value in spec.values:
        for seed in spec.seeds():
            raw = spec.point_raw(value, seed)
            src = spec.scenario_id(value)
            resolve(raw, source=src)  # fail fast before any simulation work
            tasks.append((raw, value, seed, src))
    result = SweepResult(spec)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for p in pool.map(_run_point, tasks):
                result.points.append(p)
                if progress:
                    progress(p)
    else:
        for task in tasks:
            p = _run_point(task)
            result.points.append(p)
            if progress:
                progress(p)
    return result


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, rows, columns=CSV_COLUMNS):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# -- sweep spec files ------------------------------------------------------

SPEC_KEYS = {"name", "base", "base_config", "parameter", "values", "range", "replications", "seed"}


def parse_sweep_spec(text: str, source: str = "<sweep>", base_dir: Path | None = None) -> SweepSpec:
    raw = load_text(text, source)
    unknown = set(raw) - SPEC_KEYS
    if unknown:
        raise ConfigError(f"unknown sweep key '{sorted(unknown)[0]}'", None, source)
    if "base" in raw and "base_config" in raw:
        raise ConfigError("give either base or base_config", None, source)
    base = raw.get("base") or {}
    if "base_config" in raw:
        path = Path(raw["base_config"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        base = load_text(path.read_text(encoding="utf-8"), str(path))
    values = raw.get("values")
    if values is None and "range" in raw:
        rng = raw["range"]
        try:
            start, stop, step = rng["start"], rng["stop"], rng["step"]
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            values = [start + i * step for i in range(n)]
        except (KeyError, TypeError, ZeroDivisionError):
            raise ConfigError("range needs numeric start, stop, step", None, source) from None
    if not isinstance(values, list):
        raise ConfigError("sweep needs a list of values (or a range)", None, source)
    try:
        return SweepSpec(
            name=str(raw.get("name", Path(source).stem)),
            base=base,
            parameter=raw.get("parameter", ""),
            values=values,
            replications=int(raw.get("replications", 10)),
            seed=int(raw.get("seed", 1)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), None, source) from None


def load_sweep_spec(path) -> SweepSpec:
    path = Path(path)
    return parse_sweep_spec(path.read_text(encoding="utf-8"), str(path), path.parent)


# -- experiments -----------------------------------------------------------

def fig1_spec(cw_values=(16, 50, 100, 256, 500), n_stations=40, mpr_limit=8, replications=10,
              total_slots=1_000_000, warmup_slots=None, seed=1) -> SweepSpec:
    """Saturation throughput per AC against cw_min."""
    base = {
        "channel": {"mpr_limit": mpr_limit},
        "backoff": {"max_backoff_stage": 5, "retry_limit": 4},
        "n_stations": n_stations,
        "traffic": {"mode": "saturation"},
        "run": {"total_slots": total_slots,
                "warmup_slots": total_slots // 10 if warmup_slots is None else warmup_slots},
    }
    return SweepSpec("fig1", base, "cw_min", list(cw_values), replications, seed)


def fig2_spec(load_values=(0.1, 0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0), n_stations=40, mpr_limit=8,
              max_backoff_stage=7, cw_min=256, replications=10, total_slots=1_000_000,
              warmup_slots=None, seed=1) -> SweepSpec:
    """Throughput, MAC delay and jitter per AC against normalized offered load."""
    base = {
        "channel": {"mpr_limit": mpr_limit},
        "backoff": {"cw_min": cw_min, "max_backoff_stage": max_backoff_stage, "retry_limit": 4},
        "n_stations": n_stations,
        "traffic": {"mode": "poisson", "normalized_load": 0.0},
        "run": {"total_slots": total_slots,
                "warmup_slots": total_slots // 10 if warmup_slots is None else warmup_slots},
    }
    return SweepSpec("fig2_3_4", base, "normalized_offered_load", list(load_values), replications, seed)


def experiment_fig1(cw_values, n_stations=40, mpr_limit=8, **kwargs) -> SweepResult:
    return run_sweep(fig1_spec(cw_values, n_stations, mpr_limit, **kwargs))


def experiment_fig2_3_4(load_values, n_stations=40, mpr_limit=8, max_backoff_stage=7, cw_min=256,
                        **kwargs) -> SweepResult:
    return run_sweep(fig2_spec(load_values, n_stations, mpr_limit, max_backoff_stage, cw_min, **kwargs))


PRESETS = {"fig1": fig1_spec, "fig2_3_4": fig2_spec}


def spec_to_yaml(spec: SweepSpec) -> str:
    return yaml.safe_dump({
        "name": spec.name, "parameter": spec.parameter, "values": list(spec.values),
        "replications": spec.replications, "seed": spec.seed, "base": spec.base,
    }, sort_keys=False)
