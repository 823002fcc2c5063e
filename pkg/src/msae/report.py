"""Figure rendering for the report path.

Training runs get a loss-curve figure; benchmark runs get grouped accuracy
bars per (input size, window) cell and a throughput chart, saved next to the
CSV output. Uses the Agg backend so headless runs work.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def save_loss_curves(log, path) -> Path:
    """Plot per-epoch objective components from a training log."""
    path = Path(path)
    epochs = [e.epoch for e in log]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(epochs, [e.report.objective_value for e in log], label="objective")
    ax1.plot(epochs, [e.report.r for e in log], label="R")
    ax1.plot(epochs, [-e.report.rl for e in log], label="-RL")
    ax1.plot(epochs, [e.report.s for e in log], label="S")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("value")
    ax1.set_title("objective components")
    ax1.legend()
    ax2.plot(epochs, [e.accuracy_pct for e in log], color="tab:green")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("train accuracy (%)")
    ax2.set_ylim(0, 100)
    ax2.set_title("training accuracy")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def save_benchmark_figures(records, out_dir) -> list[Path]:
    """Accuracy bars (per cell, grouped by pool mode) and throughput bars."""
    out_dir = Path(out_dir)
    cells = sorted({(r.input_size, r.window) for r in records})
    modes = sorted({r.pool_mode for r in records})
    labels = [f"{s}px/{w}x{w}" for s, w in cells]
    x = range(len(cells))
    width = 0.8 / max(len(modes), 1)
    paths = []

    for metric, fname, ylabel in (
        ("accuracy_pct", "benchmark_accuracy.png", "accuracy (%)"),
        ("throughput_fps", "benchmark_throughput.png", "throughput (frames/s)"),
    ):
        fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(cells)), 4))
        for mi, mode in enumerate(modes):
            by_cell = {(r.input_size, r.window): r for r in records if r.pool_mode == mode}
            vals = [getattr(by_cell[c], metric) if c in by_cell else 0.0 for c in cells]
            offs = [xi + (mi - (len(modes) - 1) / 2.0) * width for xi in x]
            if metric == "accuracy_pct":
                errs = [by_cell[c].ci_halfwidth if c in by_cell else 0.0 for c in cells]
                ax.bar(offs, vals, width=width, label=mode, yerr=errs, capsize=3)
            else:
                ax.bar(offs, vals, width=width, label=mode)
        ax.set_xticks(list(x))
        ax.set_xticklabels(labels, rotation=30, ha="right")
        ax.set_ylabel(ylabel)
        ax.set_title(f"{ylabel} by input size and window")
        ax.legend()
        fig.tight_layout()
        out = out_dir / fname
        fig.savefig(out, dpi=100)
        plt.close(fig)
        paths.append(out)
    return paths
