"""PNG figures for experiment tables and fluid trajectories."""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

MARKERS = {"mindelay": "o", "bp": "s", "lfum-pi": "^", "lfum-rtt": "v"}


def _panels(count):
    cols = min(count, 3)
    rows = math.ceil(count / cols)
    fig, axes = plt.subplots(rows, cols, figsize=(4.2 * cols, 3.4 * rows), squeeze=False)
    for ax in axes.flat[count:]:
        ax.set_visible(False)
    return fig, list(axes.flat)


def plot_metric(aggregates, metric: str, ylabel: str, path) -> Path:
    """One panel per topology, one line per strategy, error bars = 1 std."""
    topologies = sorted({a.topology for a in aggregates})
    fig, axes = _panels(len(topologies))
    for ax, topo in zip(axes, topologies):
        rows = [a for a in aggregates if a.topology == topo]
        for strategy in sorted({a.strategy for a in rows}):
            pts = sorted((a.rate, getattr(a, metric + "_mean"), getattr(a, metric + "_std"))
                         for a in rows if a.strategy == strategy)
            x, y, e = zip(*pts)
            ax.errorbar(x, y, yerr=e, marker=MARKERS.get(strategy, "."), capsize=2,
                        label=strategy)
        ax.set_title(topo)
        ax.set_xlabel("arrival rate (requests/node/s)")
        ax.set_ylabel(ylabel)
        ax.grid(alpha=0.3)
    axes[0].legend(fontsize="small")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_experiment(aggregates, out_dir) -> list[Path]:
    out = Path(out_dir)
    return [
        plot_metric(aggregates, "delay", "total delay (s)", out / "delay_vs_rate.png"),
        plot_metric(aggregates, "hits", "cache hits (requests/node/s)",
                    out / "cache_hits_vs_rate.png"),
    ]


def plot_trajectory(trajectory, path, title="") -> Path:
    n = [it.n for it in trajectory.iterates]
    cost = [it.cost for it in trajectory.iterates]
    viol = [it.violations for it in trajectory.iterates]
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    finite = [(a, c) for a, c in zip(n, cost) if math.isfinite(c)]
    if finite:
        ax.plot(*zip(*finite), marker="o", label="cost")
    ax.set_xlabel("iteration")
    ax.set_ylabel("network cost")
    ax2 = ax.twinx()
    ax2.step(n, viol, where="post", color="tab:red", alpha=0.6, label="violations")
    ax2.set_ylabel("condition violations")
    ax.set_title(title or f"status: {trajectory.status}")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
