"""Figure rendering for sweep and single-run reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

AC_STYLE = {
    0: dict(color="#0D47A1", marker="o", label="AC0"),
    1: dict(color="#1E88E5", marker="s", label="AC1"),
    2: dict(color="#E65100", marker="^", label="AC2"),
    3: dict(color="#616161", marker="v", label="AC3"),
}

AXIS_LABELS = {
    "cw_min": r"$CW_{min}$",
    "normalized_offered_load": "Normalized offered traffic",
    "K": "MPR limit K",
    "N": "Number of stations N",
    "seed": "Seed",
}

METRICS = (
    ("throughput", "Normalized throughput", False),
    ("mean_delay_us", "Mean MAC delay (ms)", True),
    ("jitter_us2", r"Jitter (ms$^2$)", True),
)


def setup_style():
    plt.rcParams.update({
        "font.size": 10,
        "axes.labelsize": 10,
        "axes.spines.top": False,
        "axes.spines.right": False,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "legend.frameon": False,
        "figure.figsize": (5.0, 3.6),
        "savefig.dpi": 150,
        "savefig.bbox": "tight",
    })


def _scale(metric):
    if metric == "mean_delay_us":
        return 1e-3
    if metric == "jitter_us2":
        return 1e-6
    return 1.0


def plot_sweep(summary, parameter: str, out_dir, stem: str) -> list[Path]:
    """One figure per metric, one curve per AC, error bars = standard error."""
    setup_style()
    out_dir = Path(out_dir)
    paths = []
    acs = sorted({r["ac_id"] for r in summary})
    for metric, ylabel, logy in METRICS:
        fig, ax = plt.subplots()
        k = _scale(metric)
        plotted = False
        for ac in acs:
            rs = [r for r in summary if r["ac_id"] == ac and r[f"{metric}_mean"] is not None]
            if not rs:
                continue
            x = [float(r["param_value"]) for r in rs]
            y = [r[f"{metric}_mean"] * k for r in rs]
            err = [(r[f"{metric}_se"] or 0.0) * k for r in rs]
            style = AC_STYLE.get(ac, dict(label=f"AC{ac}"))
            ax.errorbar(x, y, yerr=err, capsize=2, linewidth=1.2, markersize=4, **style)
            plotted = True
        ax.set_xlabel(AXIS_LABELS.get(parameter, parameter))
        ax.set_ylabel(ylabel)
        if logy and plotted and all(v > 0 for line in ax.get_lines() for v in line.get_ydata()):
            ax.set_yscale("log")
        if plotted:
            ax.legend()
        path = out_dir / f"{stem}_{metric}.png"
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
        paths.append(path)
    return paths


def plot_run(report, path) -> Path:
    """Bar chart of per-AC throughput for a single run."""
    setup_style()
    fig, ax = plt.subplots()
    ids = [m.ac_id for m in report.per_ac]
    vals = [m.throughput for m in report.per_ac]
    colors = [AC_STYLE.get(i, {}).get("color", "#999999") for i in ids]
    ax.bar([f"AC{i}" for i in ids], vals, color=colors)
    ax.set_ylabel("Normalized throughput")
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return Path(path)
