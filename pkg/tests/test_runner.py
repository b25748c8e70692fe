"""Runner orchestration: artifacts, reproducibility, arrival modes, batching."""

from __future__ import annotations

import dataclasses
import json

import pytest

from ragbench.config import validate_config
from ragbench.errors import ExhaustedCorpus
from ragbench.metrics.report import read_jsonl_artifact, strip_timing_fields
from ragbench.runner import run_benchmark, strip_log_row_timings

from conftest import config_yaml, write_corpus_dir


@pytest.fixture
def corpus(tmp_path):
    return write_corpus_dir(tmp_path / "corpus", 30)


def _cfg(tmp_path, corpus, **kwargs):
    path = tmp_path / "cfg.yaml"
    path.write_text(config_yaml(corpus, tmp_path / "out", **kwargs))
    return validate_config(path)


def test_run_produces_all_artifacts(tmp_path, corpus):
    cfg = _cfg(tmp_path, corpus, run_id="art", total_requests=40,
               mix="{query: 0.7, update: 0.3}", index_kind="HybridIVF",
               extra="  enabled: true\n  interval_ms: 50\n")
    summary = run_benchmark(cfg)
    assert not summary["partial"]
    out = tmp_path / "out" / "art"
    for name in ("requests.jsonl", "quality.jsonl", "trace.bin", "report.json",
                 "report.csv", "stage_breakdown.svg", "latency_timeline.svg",
                 "index.rgbs", "run.json"):
        assert (out / name).exists(), name
    header, rows = read_jsonl_artifact(out / "requests.jsonl", "request_log")
    assert header["run_id"] == "art"
    assert header["config_digest"] == cfg.digest
    assert header["index_stats"]["chunk_count"] > 0
    assert len(rows) == 40
    assert [r["sequence_no"] for r in rows] == list(range(40))
    report = summary["report"]
    assert report["counts"]["queries"] + report["counts"]["updates"] == 40
    assert report["quality"]["context_recall"] > 0.9


def test_run_reproducible_modulo_timing(tmp_path, corpus):
    base = _cfg(tmp_path, corpus, run_id="rep1", total_requests=60,
                mix="{query: 0.6, insert: 0.05, update: 0.3, removal: 0.05}",
                initial=25, index_kind="HybridIVF", dim=256)
    s1 = run_benchmark(base)
    s2 = run_benchmark(dataclasses.replace(base, run_id="rep2"))
    _, rows1 = read_jsonl_artifact(s1["paths"]["request_log"], "request_log")
    _, rows2 = read_jsonl_artifact(s2["paths"]["request_log"], "request_log")
    assert [strip_log_row_timings(r) for r in rows1] == [strip_log_row_timings(r) for r in rows2]
    r1, r2 = strip_timing_fields(s1["report"]), strip_timing_fields(s2["report"])
    r1.pop("run_id"), r2.pop("run_id")
    assert r1 == r2
    assert s1["report"]["quality"] == s2["report"]["quality"]


def test_run_insert_exhaustion_aborts_with_artifacts(tmp_path, corpus):
    cfg = _cfg(tmp_path, corpus, run_id="boom", total_requests=400,
               mix="{query: 0.5, insert: 0.5}", initial=28)  # only 2 reserve docs
    with pytest.raises(ExhaustedCorpus):
        run_benchmark(cfg)
    out = tmp_path / "out" / "boom"
    header, rows = read_jsonl_artifact(out / "requests.jsonl", "request_log")
    assert header["partial"] is True
    assert rows, "partial artifacts must include executed requests"


def test_run_open_loop_fixed(tmp_path, corpus):
    cfg = _cfg(tmp_path, corpus, run_id="ol", total_requests=30)
    cfg = dataclasses.replace(
        cfg, workload=dataclasses.replace(
            cfg.workload,
            arrival=dataclasses.replace(cfg.workload.arrival, kind="open_fixed", rate=500.0,
                                        workers=2),
        ),
    )
    summary = run_benchmark(cfg)
    assert summary["requests"] == 30
    assert not summary["partial"]


def test_run_closed_loop_concurrency(tmp_path, corpus):
    cfg = _cfg(tmp_path, corpus, run_id="cc", total_requests=40)
    cfg = dataclasses.replace(
        cfg, workload=dataclasses.replace(
            cfg.workload,
            arrival=dataclasses.replace(cfg.workload.arrival, concurrency=3),
        ),
    )
    summary = run_benchmark(cfg)
    assert summary["requests"] == 40
    _, rows = read_jsonl_artifact(summary["paths"]["request_log"], "request_log")
    assert sorted(r["sequence_no"] for r in rows) == list(range(40))


def test_run_query_batching(tmp_path, corpus):
    cfg = _cfg(tmp_path, corpus, run_id="batch", total_requests=24)
    cfg = dataclasses.replace(
        cfg, workload=dataclasses.replace(cfg.workload, query_batch_size=4),
    )
    summary = run_benchmark(cfg)
    _, rows = read_jsonl_artifact(summary["paths"]["request_log"], "request_log")
    batched = [r for r in rows if r.get("batch")]
    assert batched, "pure-query stream with batch_size=4 must batch"
    assert all(r["batch"] <= 4 for r in batched)
    # sum of per-stage durations never exceeds the end-to-end window
    for r in rows:
        assert sum(r["timings_us"].values()) * 1000 <= (r["end_ns"] - r["start_ns"]) * 1.001


def test_run_duration_bounded(tmp_path, corpus):
    cfg = _cfg(tmp_path, corpus, run_id="dur", total_requests=10)
    workload = dataclasses.replace(cfg.workload, total_requests=None, duration_s=0.3)
    cfg = dataclasses.replace(cfg, workload=workload)
    summary = run_benchmark(cfg)
    assert summary["requests"] > 0
    assert not summary["partial"]


def test_run_json_manifest(tmp_path, corpus):
    cfg = _cfg(tmp_path, corpus, run_id="man", total_requests=10)
    run_benchmark(cfg)
    manifest = json.loads((tmp_path / "out" / "man" / "run.json").read_text())
    assert manifest["config_digest"] == cfg.digest
    assert manifest["run_id"] == "man"
