"""Benchmark run orchestration: monitor + index + timed workload execution +
post-hoc quality evaluation + report emission."""

from __future__ import annotations

import hashlib
import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from ragbench.config import RunConfig
from ragbench.connectors.clients import EndpointConfig, RemoteEmbedder, RemoteGenerator, RemoteStoreClient
from ragbench.corpus import ingest_corpus
from ragbench.errors import MissingSnapshot
from ragbench.metrics.quality import score_query
from ragbench.metrics.report import emit_report, write_jsonl_artifact
from ragbench.monitor.daemon import MonitorConfig, start_monitor
from ragbench.pipeline.chunking import Chunker
from ragbench.pipeline.execute import (
    PipelineComponents,
    apply_update,
    handle_query_batch,
    index_corpus,
)
from ragbench.refbackends.embedder import HashEmbedder, HashEmbedderConfig
from ragbench.refbackends.generator import TemplateGenerator
from ragbench.refbackends.rerank import LexicalReranker
from ragbench.refbackends.snapshot import load_store, save_store
from ragbench.refbackends.stores import FlatStore, HybridStore, make_store
from ragbench.workload import KIND_QUERY, Request, WorkloadGenerator, write_stream_trace

LOG_TIMING_KEYS = ("timings_us", "start_ns", "end_ns", "ttft_ms", "tpot_ms")


def strip_log_row_timings(row: dict) -> dict:
    """Log row with timing-derived fields removed (reproducibility checks)."""
    return {k: v for k, v in row.items() if k not in LOG_TIMING_KEYS}


def build_components(cfg: RunConfig) -> PipelineComponents:
    emb = cfg.embedding
    if emb.backend == "remote":
        embedder = RemoteEmbedder(emb.endpoint, emb.dim)
    else:
        embedder = HashEmbedder(HashEmbedderConfig(dim=emb.dim, seed=emb.seed, lowercase=emb.lowercase))
    if cfg.store.backend == "remote":
        index = cfg.store.index
        store = RemoteStoreClient(
            cfg.store.endpoint, emb.dim, index.metric,
            index={"kind": index.kind, "nlist": index.nlist, "nprobe": index.nprobe,
                   "buffer_threshold": index.buffer_threshold, "seed": cfg.store.seed},
            capabilities=cfg.store.capabilities,
        )
    else:
        store = make_store(cfg.store.index, emb.dim, seed=cfg.store.seed)
    if cfg.generation.backend == "remote":
        generator = RemoteGenerator(cfg.generation.endpoint)
    else:
        generator = TemplateGenerator(cfg.generation.max_tokens)
    return PipelineComponents(
        embedder=embedder,
        store=store,
        reranker=LexicalReranker(),
        generator=generator,
        chunker=Chunker(cfg.chunking),
        query_spec=cfg.query,
        generation_max_tokens=cfg.generation.max_tokens,
    )


def _answer_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


class _StreamCursor:
    """Shared, thread-safe view over the request stream that hands out units
    of work: a batch of consecutive queries, or one write operation."""

    def __init__(self, requests, batch_size: int, stop_event: threading.Event,
                 deadline: float | None):
        self._it = iter(requests)
        self._batch_size = batch_size
        self._stop = stop_event
        self._deadline = deadline
        self._pushback: Request | None = None
        self._lock = threading.Lock()

    def _next_raw(self) -> Request | None:
        if self._pushback is not None:
            req, self._pushback = self._pushback, None
            return req
        return next(self._it, None)

    def next_unit(self) -> list[Request] | None:
        with self._lock:
            if self._stop.is_set():
                return None
            if self._deadline is not None and time.monotonic() >= self._deadline:
                return None
            first = self._next_raw()
            if first is None:
                return None
            if first.kind != KIND_QUERY or self._batch_size <= 1:
                return [first]
            batch = [first]
            while len(batch) < self._batch_size:
                nxt = self._next_raw()
                if nxt is None:
                    break
                if nxt.kind != KIND_QUERY:
                    self._pushback = nxt
                    break
                batch.append(nxt)
            return batch


class _Execution:
    """Accumulates log rows and quality inputs from driver workers."""

    def __init__(self, components: PipelineComponents):
        self.components = components
        self.rows: list[dict] = []
        self.quality_inputs: list[tuple] = []
        self.executed: list[Request] = []
        self._lock = threading.Lock()
        self.failure: BaseException | None = None

    def run_unit(self, unit: list[Request]) -> None:
        if unit[0].kind == KIND_QUERY:
            outcomes = handle_query_batch(
                [r.qa for r in unit], self.components.query_spec, self.components
            )
            rows, quality = [], []
            for req, out in zip(unit, outcomes):
                timings: dict[str, int] = {}
                for t in out.timings:
                    timings[t.stage] = timings.get(t.stage, 0) + t.duration_us
                row = {
                    "sequence_no": req.sequence_no,
                    "kind": req.kind,
                    "timings_us": timings,
                    "start_ns": out.start_ns,
                    "end_ns": out.end_ns,
                    "retrieved_ids": out.retrieved_ids,
                    "reranked_ids": out.reranked_ids,
                    "answer_hash": _answer_hash(out.answer_text),
                    "ttft_ms": out.ttft_ms,
                    "tpot_ms": out.tpot_ms,
                }
                if len(unit) > 1:
                    row["batch"] = len(unit)
                rows.append(row)
                quality.append((req, out.retrieved_ids, out.reranked_ids, out.answer_text))
        else:
            req = unit[0]
            out = apply_update(req, self.components)
            timings = {}
            for t in out.timings:
                timings[t.stage] = timings.get(t.stage, 0) + t.duration_us
            rows = [{
                "sequence_no": req.sequence_no,
                "kind": req.kind,
                "timings_us": timings,
                "start_ns": out.start_ns,
                "end_ns": out.end_ns,
                "rebuilt": out.rebuilt,
            }]
            quality = []
        with self._lock:
            self.rows.extend(rows)
            self.quality_inputs.extend(quality)
            self.executed.extend(unit)


def _drive_closed_loop(execution: _Execution, cursor: _StreamCursor, concurrency: int,
                       stop_event: threading.Event) -> None:
    def worker():
        while True:
            try:
                unit = cursor.next_unit()
                if unit is None:
                    return
                execution.run_unit(unit)
            except BaseException as exc:  # abort whole run, flush what we have
                execution.failure = exc
                stop_event.set()
                return

    threads = [threading.Thread(target=worker, name=f"ragbench-driver-{i}")
               for i in range(concurrency)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()


def _drive_open_loop(execution: _Execution, requests, workers: int,
                     stop_event: threading.Event, deadline: float | None) -> None:
    start = time.monotonic()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = []

        def run_one(req: Request):
            try:
                execution.run_unit([req])
            except BaseException as exc:
                execution.failure = exc
                stop_event.set()

        try:
            for req in requests:
                if stop_event.is_set():
                    break
                if deadline is not None and time.monotonic() >= deadline:
                    break
                target = start + (req.scheduled_at or 0.0)
                delay = target - time.monotonic()
                if delay > 0 and stop_event.wait(delay):
                    break
                futures.append(pool.submit(run_one, req))
        except BaseException as exc:  # stream-side failure (e.g. exhausted corpus)
            execution.failure = exc
            stop_event.set()
        for f in futures:
            f.result()


def run_benchmark(
    cfg: RunConfig,
    skip_index: bool = False,
    emit_trace: str | None = None,
    stop_event: threading.Event | None = None,
    report_formats: tuple = ("json", "csv", "svg"),
) -> dict:
    """Execute one benchmark run; returns a summary with artifact paths.

    Sequence: start monitor -> index corpus (or load snapshot) -> execute the
    workload -> stop monitor -> post-hoc quality evaluation -> emit report.
    Partial artifacts are persisted if execution is interrupted or fails.
    """
    stop_event = stop_event or threading.Event()
    out_dir = Path(cfg.output_dir) / cfg.run_id
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = out_dir / "trace.bin"
    log_path = out_dir / "requests.jsonl"
    quality_path = out_dir / "quality.jsonl"
    snapshot_path = out_dir / "index.rgbs"

    manifest = ingest_corpus(cfg.corpus.path, cfg.corpus.format, cfg.corpus.limit, cfg.corpus.initial)
    components = build_components(cfg)
    generator = WorkloadGenerator(cfg.workload, manifest, components.chunker)

    monitor = None
    if cfg.monitor.enabled:
        extra = ()
        if cfg.monitor.scrape_url:
            from ragbench.connectors.scrape import ServingMetricsProbe

            extra = (ServingMetricsProbe(EndpointConfig(base_url=cfg.monitor.scrape_url)),)
        monitor = start_monitor(MonitorConfig(
            output_path=trace_path,
            interval_ms=cfg.monitor.interval_ms,
            per_metric_buffer_bytes=cfg.monitor.per_metric_buffer_bytes,
            probes=cfg.monitor.probes,
            watched_pids=cfg.monitor.watched_pids,
            watched_cgroups=cfg.monitor.watched_cgroups,
            budget_fraction=cfg.monitor.budget_fraction,
            annotation=f"run={cfg.run_id};cfg={cfg.digest}",
            extra_probes=extra,
        ))

    execution = _Execution(components)
    partial = False
    index_stats = {}
    try:
        if skip_index:
            if not snapshot_path.exists():
                raise MissingSnapshot(f"--skip-index set but no snapshot at {snapshot_path}")
            components.store = load_store(snapshot_path)
            for doc in manifest.initial_documents:
                for chunk in components.chunker(doc):
                    components.catalog.add(chunk)
            stats_path = out_dir / "index_stats.json"
            if stats_path.exists():
                index_stats = json.loads(stats_path.read_text())
        else:
            stats = index_corpus(manifest.initial_documents, components, cfg.embedding.batch_size)
            index_stats = stats.as_dict()
            (out_dir / "index_stats.json").write_text(json.dumps(index_stats, sort_keys=True))
            if isinstance(components.store, (FlatStore, HybridStore)):
                save_store(components.store, snapshot_path)

        deadline = None
        if cfg.workload.duration_s is not None:
            deadline = time.monotonic() + cfg.workload.duration_s
        arrival = cfg.workload.arrival
        if arrival.kind == "closed":
            cursor = _StreamCursor(generator.requests(), cfg.workload.query_batch_size,
                                   stop_event, deadline)
            _drive_closed_loop(execution, cursor, arrival.concurrency, stop_event)
        else:
            _drive_open_loop(execution, generator.requests(), arrival.workers,
                             stop_event, deadline)
        if execution.failure is not None:
            raise execution.failure
        partial = stop_event.is_set()
    except BaseException:
        partial = True
        raise
    finally:
        if monitor is not None:
            monitor.stop()
        _persist_artifacts(cfg, execution, components, index_stats, partial,
                           log_path, quality_path, emit_trace)

    result = emit_report(log_path, trace_path if cfg.monitor.enabled else None,
                         quality_path, out_dir, formats=list(report_formats))
    summary = {
        "run_id": cfg.run_id,
        "config_digest": cfg.digest,
        "partial": partial,
        "requests": len(execution.rows),
        "paths": {
            "request_log": str(log_path),
            "quality_records": str(quality_path),
            "trace": str(trace_path) if cfg.monitor.enabled else None,
            **result["paths"],
        },
        "report": result["report"],
    }
    (out_dir / "run.json").write_text(
        json.dumps({k: v for k, v in summary.items() if k != "report"}, indent=2, sort_keys=True)
    )
    return summary


def _persist_artifacts(cfg, execution: _Execution, components, index_stats: dict,
                       partial: bool, log_path: Path, quality_path: Path,
                       emit_trace: str | None) -> None:
    rows = sorted(execution.rows, key=lambda r: r["sequence_no"])
    write_jsonl_artifact(
        log_path, "request_log", cfg.run_id, cfg.digest, rows,
        extra_header={"index_stats": index_stats, "partial": partial},
    )
    quality_rows = []
    for req, retrieved, reranked, answer in sorted(execution.quality_inputs,
                                                   key=lambda q: q[0].sequence_no):
        qa = req.qa
        contexts = []
        for cid in reranked:
            chunk = components.catalog.lookup(cid)
            if chunk is not None:
                contexts.append(chunk.effective_text)
        scores = score_query([*retrieved], [qa.target_chunk_id], answer,
                             qa.expected_answer, contexts)
        quality_rows.append({
            "sequence_no": req.sequence_no,
            "question": qa.question,
            "expected_answer": qa.expected_answer,
            "target_chunk_id": qa.target_chunk_id,
            "version": qa.version,
            "retrieved_ids": retrieved,
            "reranked_ids": reranked,
            "answer_text": answer,
            "relevant_ids": [qa.target_chunk_id],
            "scores": {
                "context_recall": scores.context_recall,
                "context_recall_paper_literal": scores.context_recall_paper_literal,
                "query_accuracy": scores.query_accuracy,
                "factual_consistency": scores.factual_consistency,
                "excluded": scores.excluded,
            },
        })
    write_jsonl_artifact(quality_path, "quality_records", cfg.run_id, cfg.digest, quality_rows)
    if emit_trace:
        write_stream_trace(sorted(execution.executed, key=lambda r: r.sequence_no), emit_trace)
