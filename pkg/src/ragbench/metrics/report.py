"""Run report assembly from logged artifacts.

All run artifacts are line-delimited JSON with a header record; this module
owns both schemas (writer helpers used by the runner, parser used by the
`report` command) so they cannot drift apart.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

from ragbench.errors import CorruptLog, DigestMismatch, SchemaVersionMismatch
from ragbench.metrics.stats import round6, summarize_latencies
from ragbench.monitor.tracefile import parse_trace
from ragbench.pipeline.model import STAGES

ARTIFACT_SCHEMA = 1
REPORT_VERSION = 1

TIMING_FIELDS = ("wall_time_s", "qps", "stages", "latency_e2e_ms", "generation", "resources")
TIMING_INDEX_FIELDS = ("chunk_s", "embed_s", "insert_s", "build_s")


# --- artifact I/O -----------------------------------------------------------

def write_jsonl_artifact(path: str | Path, kind: str, run_id: str, config_digest: str,
                         rows: list[dict], extra_header: dict | None = None) -> None:
    header = {"artifact": kind, "schema": ARTIFACT_SCHEMA, "run_id": run_id,
              "config_digest": config_digest}
    if extra_header:
        header.update(extra_header)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_jsonl_artifact(path: str | Path, expected_kind: str) -> tuple[dict, list[dict]]:
    header: dict | None = None
    rows: list[dict] = []
    offset = 0
    with open(path, "rb") as fh:
        for raw in fh:
            line = raw.decode("utf-8", errors="replace").strip()
            if line:
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorruptLog(f"invalid JSON in {path}: {exc}", offset=offset) from exc
                if header is None:
                    header = rec
                else:
                    rows.append(rec)
            offset += len(raw)
    if header is None:
        raise CorruptLog(f"empty artifact file {path}", offset=0)
    if header.get("artifact") != expected_kind:
        raise CorruptLog(f"expected artifact {expected_kind!r}, got {header.get('artifact')!r}")
    if header.get("schema") != ARTIFACT_SCHEMA:
        raise SchemaVersionMismatch(
            f"artifact schema {header.get('schema')} != {ARTIFACT_SCHEMA}"
        )
    return header, rows


# --- aggregation -------------------------------------------------------------

def _mean(values: list[float]) -> float:
    return math.fsum(values) / len(values) if values else 0.0


def _aggregate_resources(trace_path: str | Path | None) -> tuple[dict, bool]:
    """Per-metric mean/max/count from the trace; returns (summary, incomplete)."""
    if trace_path is None or not Path(trace_path).exists():
        return {}, True
    try:
        trace = parse_trace(trace_path)
    except CorruptLog:
        return {}, True
    summary = {}
    for name in sorted(trace.by_metric()):
        values = [v for _, v in trace.by_metric()[name]]
        summary[name] = {
            "count": len(values),
            "mean": round6(_mean(values)),
            "max": round6(max(values)),
        }
    return summary, not (trace.complete and trace.consistent)


def build_report(
    log_header: dict,
    log_rows: list[dict],
    quality_header: dict | None,
    quality_rows: list[dict],
    trace_path: str | Path | None,
    context_recall_mode: str = "recall",
) -> dict:
    if quality_header is not None:
        if quality_header.get("config_digest") != log_header.get("config_digest"):
            raise DigestMismatch(
                f"quality records digest {quality_header.get('config_digest')!r} does not "
                f"match request log digest {log_header.get('config_digest')!r}"
            )

    counts = {"requests": len(log_rows), "queries": 0, "inserts": 0, "updates": 0, "removals": 0}
    stage_ms: dict[str, list[float]] = {}
    e2e_points: list[tuple[int, float]] = []
    ttft: list[float] = []
    tpot: list[float] = []
    rebuild_seqs: list[int] = []
    min_start = None
    max_end = None
    for row in log_rows:
        kind = row.get("kind", "query")
        key = {"query": "queries", "insert": "inserts", "update": "updates", "removal": "removals"}.get(kind)
        if key:
            counts[key] += 1
        for stage, us in row.get("timings_us", {}).items():
            stage_ms.setdefault(stage, []).append(us / 1000.0)
        start, end = row.get("start_ns"), row.get("end_ns")
        if start is not None and end is not None:
            min_start = start if min_start is None else min(min_start, start)
            max_end = end if max_end is None else max(max_end, end)
            if kind == "query":
                e2e_points.append((row["sequence_no"], (end - start) / 1e6))
        if row.get("ttft_ms") is not None:
            ttft.append(row["ttft_ms"])
        if row.get("tpot_ms") is not None:
            tpot.append(row["tpot_ms"])
        if row.get("rebuilt"):
            rebuild_seqs.append(row["sequence_no"])

    wall_time_s = ((max_end - min_start) / 1e9) if (min_start is not None and max_end is not None and max_end > min_start) else 0.0
    qps = counts["queries"] / wall_time_s if wall_time_s > 0 else 0.0

    stage_order = [s for s in STAGES if s in stage_ms] + sorted(set(stage_ms) - set(STAGES))
    stages = [summarize_latencies(s, stage_ms[s]).as_dict() for s in stage_order]
    e2e_summary = (
        summarize_latencies("e2e", [ms for _, ms in e2e_points]).as_dict()
        if e2e_points
        else None
    )

    evaluated = [r for r in quality_rows if not r.get("scores", {}).get("excluded")]
    excluded = len(quality_rows) - len(evaluated)
    quality = {
        "context_recall": round6(_mean([r["scores"]["context_recall"] for r in evaluated])),
        "context_recall_paper_literal": round6(
            _mean([r["scores"]["context_recall_paper_literal"] for r in evaluated])
        ),
        "query_accuracy": round6(_mean([r["scores"]["query_accuracy"] for r in evaluated])),
        "factual_consistency": round6(
            _mean([
                r["scores"]["factual_consistency"]
                for r in evaluated
                if r["scores"]["factual_consistency"] is not None
            ])
        ),
    }

    resources, trace_incomplete = _aggregate_resources(trace_path)

    index_stats = dict(log_header.get("index_stats", {}))
    for key in TIMING_INDEX_FIELDS:
        if key in index_stats:
            index_stats[key] = round6(index_stats[key])

    return {
        "report_version": REPORT_VERSION,
        "run_id": log_header.get("run_id", ""),
        "config_digest": log_header.get("config_digest", ""),
        "partial": bool(log_header.get("partial", False)),
        "trace_incomplete": trace_incomplete,
        "context_recall_mode": context_recall_mode,
        "counts": {
            **counts,
            "evaluated_queries": len(evaluated),
            "excluded_sentinels": excluded,
        },
        "wall_time_s": round6(wall_time_s),
        "qps": round6(qps),
        "stages": stages,
        "latency_e2e_ms": e2e_summary,
        "generation": {
            "ttft_ms_mean": round6(_mean(ttft)) if ttft else None,
            "tpot_ms_mean": round6(_mean(tpot)) if tpot else None,
        },
        "quality": quality,
        "resources": resources,
        "index": index_stats,
        "rebuilds": {"count": len(rebuild_seqs), "sequence_nos": rebuild_seqs},
    }


def strip_timing_fields(report: dict) -> dict:
    """Report with every timing-derived field removed; what is left must be
    identical across repeated runs of the same config."""
    out = json.loads(json.dumps(report))
    for key in TIMING_FIELDS:
        out.pop(key, None)
    index = out.get("index", {})
    for key in TIMING_INDEX_FIELDS:
        index.pop(key, None)
    return out


# --- emission ----------------------------------------------------------------

def emit_report(
    request_log: str | Path,
    trace_file: str | Path | None,
    quality_records: str | Path | None,
    out_dir: str | Path,
    formats: list[str] = ("json",),
    context_recall_mode: str = "recall",
) -> dict:
    """Aggregate the run artifacts and write the requested report formats.

    Returns {"report": <dict>, "paths": {format: path}}.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_header, log_rows = read_jsonl_artifact(request_log, "request_log")
    quality_header, quality_rows = (None, [])
    if quality_records is not None and Path(quality_records).exists():
        quality_header, quality_rows = read_jsonl_artifact(quality_records, "quality_records")

    report = build_report(
        log_header, log_rows, quality_header, quality_rows, trace_file, context_recall_mode
    )

    paths: dict[str, str] = {}
    if "json" in formats:
        path = out_dir / "report.json"
        path.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
        paths["json"] = str(path)
    if "csv" in formats:
        path = out_dir / "report.csv"
        rows = list(report["stages"])
        if report["latency_e2e_ms"]:
            rows.append(report["latency_e2e_ms"])
        lines = ["stage,count,mean_ms,p50_ms,p95_ms,p99_ms,max_ms"]
        for s in rows:
            lines.append(
                f"{s['stage']},{s['count']},{s['mean_ms']},{s['p50_ms']},"
                f"{s['p95_ms']},{s['p99_ms']},{s['max_ms']}"
            )
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        paths["csv"] = str(path)
    if "svg" in formats:
        from ragbench.metrics import plots

        breakdown = out_dir / "stage_breakdown.svg"
        timeline = out_dir / "latency_timeline.svg"
        plots.render_stage_breakdown(report["stages"], breakdown)
        e2e_points = [
            (row["sequence_no"], (row["end_ns"] - row["start_ns"]) / 1e6)
            for row in log_rows
            if row.get("kind") == "query" and row.get("start_ns") is not None
        ]
        plots.render_latency_timeline(e2e_points, report["rebuilds"]["sequence_nos"], timeline)
        paths["svg"] = str(breakdown)
        paths["svg_timeline"] = str(timeline)
    return {"report": report, "paths": paths}
