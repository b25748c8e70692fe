"""Post-hoc aggregation: latency statistics, quality judges, reports."""

from ragbench.metrics.quality import (
    QualityScores,
    context_recall,
    factual_consistency,
    query_accuracy,
    score_query,
)
from ragbench.metrics.report import emit_report, strip_timing_fields
from ragbench.metrics.stats import LatencySummary, percentile, round6, summarize_latencies

__all__ = [
    "LatencySummary",
    "QualityScores",
    "context_recall",
    "emit_report",
    "factual_consistency",
    "percentile",
    "query_accuracy",
    "round6",
    "score_query",
    "strip_timing_fields",
    "summarize_latencies",
]
