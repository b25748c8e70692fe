"""Command-line entry point.

Subcommands: validate, index, run, report, monitor.
Exit codes: 0 ok, 2 config error, 3 index error, 4 run error, 5 report error.
"""

from __future__ import annotations

import argparse
import json
import signal
import sys
import threading
import time
from pathlib import Path

from ragbench.config import validate_config
from ragbench.corpus import ingest_corpus
from ragbench.errors import (
    ConfigParseError,
    CorruptLog,
    DigestMismatch,
    MissingSnapshot,
    RagBenchError,
    SchemaError,
    SchemaVersionMismatch,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INDEX = 3
EXIT_RUN = 4
EXIT_REPORT = 5


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ragbench",
        description="End-to-end RAG benchmarking harness with deterministic reference backends.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a run config")
    p.add_argument("config")

    p = sub.add_parser("index", help="ingest the corpus and build the index snapshot")
    p.add_argument("config")

    p = sub.add_parser("run", help="execute a benchmark run")
    p.add_argument("config")
    p.add_argument("--skip-index", action="store_true",
                   help="load the existing index snapshot instead of rebuilding")
    p.add_argument("--emit-trace", metavar="PATH",
                   help="write the generated request stream as line-delimited records")

    p = sub.add_parser("report", help="aggregate run artifacts into reports")
    p.add_argument("--request-log", required=True)
    p.add_argument("--trace")
    p.add_argument("--quality")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--format", default="json,csv,svg",
                   help="comma-separated: json,csv,svg")

    p = sub.add_parser("monitor", help="run the resource monitor standalone")
    p.add_argument("--interval-ms", type=int, default=100)
    p.add_argument("--output", required=True)
    p.add_argument("--pid", type=int, action="append", default=[])
    p.add_argument("--cgroup", action="append", default=[])
    p.add_argument("--probes", default="system,process")
    p.add_argument("--buffer-bytes", type=int, default=2 * 1024 * 1024)
    p.add_argument("--duration-s", type=float, help="stop after this long (default: until signal)")
    return parser


def _cmd_validate(args) -> int:
    cfg = validate_config(args.config)
    print(f"config ok: run_id={cfg.run_id} digest={cfg.digest}")
    return EXIT_OK


def _cmd_index(args) -> int:
    from ragbench.pipeline.execute import index_corpus
    from ragbench.refbackends.snapshot import save_store
    from ragbench.runner import build_components

    cfg = validate_config(args.config)
    out_dir = Path(cfg.output_dir) / cfg.run_id
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = ingest_corpus(cfg.corpus.path, cfg.corpus.format, cfg.corpus.limit, cfg.corpus.initial)
    components = build_components(cfg)
    stats = index_corpus(manifest.initial_documents, components, cfg.embedding.batch_size)
    (out_dir / "index_stats.json").write_text(json.dumps(stats.as_dict(), sort_keys=True))
    snapshot_path = out_dir / "index.rgbs"
    if cfg.store.backend == "reference":
        from ragbench.refbackends.stores import FlatStore, HybridStore

        if isinstance(components.store, (FlatStore, HybridStore)):
            save_store(components.store, snapshot_path)
    print(f"indexed {stats.chunk_count} chunks in "
          f"{stats.chunk_s + stats.embed_s + stats.insert_s + stats.build_s:.2f}s "
          f"-> {snapshot_path}")
    return EXIT_OK


def _cmd_run(args) -> int:
    from ragbench.runner import run_benchmark

    cfg = validate_config(args.config)
    stop_event = threading.Event()
    previous = {}

    def handle_signal(signum, frame):
        stop_event.set()

    for sig in (signal.SIGINT, signal.SIGTERM):
        previous[sig] = signal.signal(sig, handle_signal)
    try:
        summary = run_benchmark(cfg, skip_index=args.skip_index, emit_trace=args.emit_trace,
                                stop_event=stop_event)
    finally:
        for sig, handler in previous.items():
            signal.signal(sig, handler)
    report = summary["report"]
    print(f"run {summary['run_id']} digest={summary['config_digest']} "
          f"requests={summary['requests']} qps={report['qps']} "
          f"partial={summary['partial']}")
    for fmt, path in summary["paths"].items():
        if path:
            print(f"  {fmt}: {path}")
    return EXIT_OK


def _cmd_report(args) -> int:
    from ragbench.metrics.report import emit_report

    formats = [f.strip() for f in args.format.split(",") if f.strip()]
    result = emit_report(args.request_log, args.trace, args.quality, args.out_dir, formats)
    for fmt, path in result["paths"].items():
        print(f"{fmt}: {path}")
    return EXIT_OK


def _cmd_monitor(args) -> int:
    from ragbench.monitor.daemon import MonitorConfig, start_monitor

    cfg = MonitorConfig(
        output_path=args.output,
        interval_ms=args.interval_ms,
        per_metric_buffer_bytes=args.buffer_bytes,
        probes=tuple(p.strip() for p in args.probes.split(",") if p.strip()),
        watched_pids=tuple(args.pid),
        watched_cgroups=tuple(args.cgroup),
    )
    handle = start_monitor(cfg)
    stop_event = threading.Event()

    def handle_signal(signum, frame):
        stop_event.set()

    signal.signal(signal.SIGINT, handle_signal)
    signal.signal(signal.SIGTERM, handle_signal)
    print(f"monitoring {handle.metric_count} metrics -> {args.output}", flush=True)
    deadline = time.monotonic() + args.duration_s if args.duration_s else None
    while not stop_event.is_set():
        if deadline is not None and time.monotonic() >= deadline:
            break
        stop_event.wait(0.2)
    report = handle.stop()
    print(f"written={report.samples_written} dropped={report.samples_dropped} "
          f"bytes={report.trace_bytes}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "validate": (_cmd_validate, EXIT_CONFIG),
        "index": (_cmd_index, EXIT_INDEX),
        "run": (_cmd_run, EXIT_RUN),
        "report": (_cmd_report, EXIT_REPORT),
        "monitor": (_cmd_monitor, EXIT_RUN),
    }
    handler, default_code = handlers[args.command]
    try:
        return handler(args)
    except (ConfigParseError, SchemaError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        if isinstance(exc, SchemaError):
            for diag in exc.diagnostics:
                print(f"  - {diag}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingSnapshot as exc:
        print(f"index error: {exc}", file=sys.stderr)
        return EXIT_INDEX
    except (CorruptLog, SchemaVersionMismatch, DigestMismatch) as exc:
        print(f"report error: {exc}", file=sys.stderr)
        return EXIT_REPORT
    except RagBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return default_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return default_code


if __name__ == "__main__":
    sys.exit(main())
