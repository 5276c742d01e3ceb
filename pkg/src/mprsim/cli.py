"""Command line entry point: ``mprsim run|sweep|check``."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from mprsim.config import ConfigError, apply_overrides, dump_scenario, load_text, resolve
from mprsim.engine import run, write_trace
from mprsim.sweep import (
    PRESETS,
    SUMMARY_COLUMNS,
    SweepSpec,
    load_sweep_spec,
    run_sweep,
    write_csv,
)

OUT_ENV = "MPRSIM_OUT"


def _overrides(args) -> dict:
    o = {}
    if args.seed is not None:
        o["run.seed"] = args.seed
    if args.slots is not None:
        o["run.total_slots"] = args.slots
        if args.warmup is None:
            o["run.warmup_slots"] = args.slots // 10
    if args.warmup is not None:
        o["run.warmup_slots"] = args.warmup
    return o


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or "results")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(path, overrides):
    text = Path(path).read_text(encoding="utf-8")
    raw = apply_overrides(load_text(text, str(path)), overrides)
    # line anchors come from the file as written; overrides only touch run.*
    return resolve(raw, text, str(path))


def _fmt(x, scale=1.0, spec=".4f"):
    return "-" if x is None else format(x * scale, spec)


def cmd_check(args) -> int:
    cfg = _load(args.config, _overrides(args))
    sys.stdout.write(dump_scenario(cfg))
    return 0


def cmd_run(args) -> int:
    cfg = _load(args.config, _overrides(args))
    out = _out_dir(args)
    stem = Path(args.config).stem
    report, trace = run(cfg, trace=args.trace)
    rows = [{
        "scenario_id": stem, "seed": cfg.run.seed, "param_value": None, "ac_id": m.ac_id,
        "throughput": m.throughput, "mean_delay_us": m.mean_delay_us, "jitter_us2": m.jitter_us2,
        "delivered": m.delivered, "dropped": m.dropped,
    } for m in report.per_ac]
    csv_path = out / f"{stem}.csv"
    write_csv(csv_path, rows)
    print(f"{'AC':>4} {'throughput':>11} {'delay_ms':>10} {'jitter_ms2':>12} {'delivered':>10} {'dropped':>8}")
    for m in report.per_ac:
        print(f"{m.ac_id:>4} {m.throughput:>11.4f} {_fmt(m.mean_delay_us, 1e-3, '.3f'):>10} "
              f"{_fmt(m.jitter_us2, 1e-6, '.3f'):>12} {m.delivered:>10} {m.dropped:>8}")
    agg = report.aggregate
    print(f"{'all':>4} {agg.throughput:>11.4f} {_fmt(agg.mean_delay_us, 1e-3, '.3f'):>10} "
          f"{_fmt(agg.jitter_us2, 1e-6, '.3f'):>12} {agg.delivered:>10} {agg.dropped:>8}")
    print(f"wrote {csv_path}")
    if trace is not None:
        trace_path = out / f"{stem}.trace.ndjson"
        write_trace(trace, trace_path)
        print(f"wrote {trace_path}")
    if not args.no_plots:
        from mprsim.plotting import plot_run

        fig = plot_run(report, out / f"{stem}_throughput.png")
        print(f"wrote {fig}")
    return 0


def _sweep_spec(args) -> SweepSpec:
    if args.spec in PRESETS and not Path(args.spec).exists():
        spec = PRESETS[args.spec]()
    else:
        spec = load_sweep_spec(args.spec)
    base = apply_overrides(spec.base, {k: v for k, v in _overrides(args).items() if k != "run.seed"})
    spec = SweepSpec(spec.name, base, spec.parameter, spec.values,
                     args.replications or spec.replications,
                     spec.seed if args.seed is None else args.seed)
    return spec


def cmd_sweep(args) -> int:
    spec = _sweep_spec(args)
    out = _out_dir(args)
    total = len(spec.values) * spec.replications

    def progress(p):
        progress.done += 1
        print(f"[{progress.done}/{total}] {spec.parameter}={p.value} seed={p.seed} "
              f"S={p.report.aggregate.throughput:.4f}", file=sys.stderr, flush=True)

    progress.done = 0
    result = run_sweep(spec, jobs=args.jobs, progress=progress if not args.quiet else None)
    rows_path = out / f"{spec.name}.csv"
    summary_path = out / f"{spec.name}_summary.csv"
    write_csv(rows_path, result.rows())
    summary = result.summary()
    write_csv(summary_path, summary, SUMMARY_COLUMNS)
    print(f"wrote {rows_path}")
    print(f"wrote {summary_path}")
    if not args.no_plots:
        from mprsim.plotting import plot_sweep

        for p in plot_sweep(summary, spec.parameter, out, spec.name):
            print(f"wrote {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mprsim",
        description="Adaptive-backoff CSMA/CA over a k-MPR channel with access-category differentiation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, help="master seed (first seed for sweeps)")
        p.add_argument("--slots", type=int, help="total slots per run")
        p.add_argument("--warmup", type=int, help="warm-up slots excluded from metrics (default: 10%% of slots)")

    p = sub.add_parser("check", help="validate a scenario and print it fully resolved")
    p.add_argument("config")
    common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("run", help="simulate one scenario")
    p.add_argument("config")
    common(p)
    p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./results)")
    p.add_argument("--trace", action="store_true", help="export the per-slot trace as NDJSON")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a parameter sweep (spec file, or preset fig1 / fig2_3_4)")
    p.add_argument("spec")
    common(p)
    p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./results)")
    p.add_argument("--replications", type=int, help="seeds per sweep point")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--no-plots", action="store_true")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
