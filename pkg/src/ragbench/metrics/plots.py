"""Matplotlib figures for run reports; written to files, never interactive."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def render_stage_breakdown(summaries: list[dict], path: str | Path) -> None:
    """Horizontal bar chart of mean per-stage latency."""
    stages = [s["stage"] for s in summaries]
    means = [s["mean_ms"] for s in summaries]
    fig, ax = plt.subplots(figsize=(7, 0.5 * max(4, len(stages))))
    ax.barh(stages[::-1], means[::-1], color="#4878a8")
    ax.set_xlabel("mean latency (ms)")
    ax.set_title("Per-stage latency breakdown")
    ax.grid(axis="x", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def render_latency_timeline(
    points: list[tuple[int, float]],
    rebuild_seqs: list[int],
    path: str | Path,
) -> None:
    """Per-query end-to-end latency over the request sequence, with rebuild
    positions marked."""
    fig, ax = plt.subplots(figsize=(8, 4))
    if points:
        xs, ys = zip(*points)
        ax.plot(xs, ys, lw=0.8, color="#4878a8")
    for seq in rebuild_seqs:
        ax.axvline(seq, color="#c44e52", lw=0.8, ls="--", alpha=0.7)
    ax.set_xlabel("request sequence number")
    ax.set_ylabel("query latency (ms)")
    ax.set_title("Query latency over time" + (" (dashed: index rebuilds)" if rebuild_seqs else ""))
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
