"""Latency aggregation: nearest-rank percentiles and per-stage summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ragbench.errors import EmptySamples


def percentile(samples: list[float], p: float) -> float:
    """Nearest-rank percentile: element at index ceil(p*n)-1 of the sorted list."""
    if not samples:
        raise EmptySamples("percentile of empty sample list")
    if not (0.0 < p <= 1.0):
        raise ValueError(f"p must be in (0, 1], got {p}")
    ordered = sorted(samples)
    return ordered[math.ceil(p * len(ordered)) - 1]


def round6(x: float) -> float:
    """Pinned report float formatting: 6 significant digits."""
    return float(f"{x:.6g}")


@dataclass(frozen=True)
class LatencySummary:
    stage: str
    count: int
    mean_ms: float
    p50_ms: float
    p95_ms: float
    p99_ms: float
    max_ms: float

    def as_dict(self) -> dict:
        return {
            "stage": self.stage,
            "count": self.count,
            "mean_ms": round6(self.mean_ms),
            "p50_ms": round6(self.p50_ms),
            "p95_ms": round6(self.p95_ms),
            "p99_ms": round6(self.p99_ms),
            "max_ms": round6(self.max_ms),
        }


def summarize_latencies(stage: str, durations_ms: list[float]) -> LatencySummary:
    if not durations_ms:
        raise EmptySamples(f"no samples for stage {stage!r}")
    return LatencySummary(
        stage=stage,
        count=len(durations_ms),
        mean_ms=math.fsum(durations_ms) / len(durations_ms),
        p50_ms=percentile(durations_ms, 0.50),
        p95_ms=percentile(durations_ms, 0.95),
        p99_ms=percentile(durations_ms, 0.99),
        max_ms=max(durations_ms),
    )
