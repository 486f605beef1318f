"""Figure rendering for CLI report paths.

Each helper takes already-computed results and writes one PNG next to the
delimited output; nothing here recomputes anything. The Agg backend keeps the
renders headless and reproducible.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .diagnostics import DominanceRow, Histogram
from .trainer import TrainHistory

_DPI = 120


def _finish(fig, path):
    fig.tight_layout()
    # drop the version-bearing Software chunk so PNG bytes are install-stable
    fig.savefig(path, dpi=_DPI, metadata={"Software": None})
    plt.close(fig)


def save_history_plot(history: TrainHistory, path) -> None:
    fig, axes = plt.subplots(2, 2, figsize=(9, 6))
    panels = [
        ("loss", "batch loss"),
        ("margin", "mean margin dR - gamma"),
        ("win_rate", "batch win rate"),
        ("mean_gamma", "mean gamma"),
    ]
    steps = history.column("step") if len(history) else np.array([])
    for ax, (name, label) in zip(axes.ravel(), panels):
        if len(history):
            ax.plot(steps, history.column(name), lw=1.0)
        ax.set_xlabel("step")
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
    _finish(fig, path)


def save_histogram_plot(hist: Histogram, path, xlabel: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    widths = np.diff(hist.edges)
    ax.bar(hist.edges[:-1], hist.counts, width=widths, align="edge", edgecolor="none")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("count")
    ax.grid(True, alpha=0.3)
    _finish(fig, path)


def save_density_plot(values: np.ndarray, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(values, bins=64, density=True)
    ax.set_xlabel("jittered rank gap")
    ax.set_ylabel("density")
    ax.grid(True, alpha=0.3)
    _finish(fig, path)


def save_dominance_plot(rows: list[DominanceRow], path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    betas = sorted({r.beta for r in rows})
    for beta in betas:
        pts = sorted((r.gamma, r.win_rate) for r in rows if r.beta == beta)
        ax.plot(
            [p[0] for p in pts],
            [p[1] for p in pts],
            marker="o",
            label=f"beta={beta:g}",
        )
    ax.set_xlabel("fixed margin gamma")
    ax.set_ylabel("final win rate")
    ax.legend()
    ax.grid(True, alpha=0.3)
    _finish(fig, path)


def save_sweep_plot(rows: list[dict], path) -> None:
    """Win rate per grid point, labeled by the swept settings."""
    fig, ax = plt.subplots(figsize=(max(6, 0.8 * len(rows)), 4))
    xs = np.arange(len(rows))
    ax.bar(xs, [r["win_rate"] for r in rows])
    labels = [
        f"{r['method']}\nb={r['beta']:g} g={r['gamma']:g}\n{r['schedule']}"
        for r in rows
    ]
    ax.set_xticks(xs)
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylabel("final win rate")
    ax.grid(True, axis="y", alpha=0.3)
    _finish(fig, path)
