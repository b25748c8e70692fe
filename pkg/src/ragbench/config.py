"""Run configuration: YAML schema, validation with key-path/line diagnostics,
and the typed RunConfig bundle handed to the runner.

Unknown keys are errors (fail-fast), not warnings.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ragbench.connectors.clients import STORE_OPS, EndpointConfig
from ragbench.errors import ConfigParseError, SchemaError
from ragbench.pipeline.model import ChunkingSpec, IndexSpec, QuerySpec
from ragbench.workload import AccessDistribution, ArrivalSpec, OperationMix, WorkloadSpec

DEFAULT_TEMPLATE = "{question}\n{contexts}"

# Registered backends and the store ops each supports; remote capabilities can
# be narrowed per config (`store.capabilities`).
BACKENDS = {
    "embedding": ("reference", "remote"),
    "store": ("reference", "remote"),
    "rerank": ("reference",),
    "generation": ("reference", "remote"),
}
REQUIRED_STORE_OPS = set(STORE_OPS)


@dataclass(frozen=True)
class Diagnostic:
    path: str
    message: str
    line: int | None = None

    def __str__(self) -> str:
        at = f" (line {self.line})" if self.line is not None else ""
        return f"{self.path}{at}: {self.message}"


@dataclass
class CorpusConfig:
    path: str
    format: str = "plain_dir"
    limit: int | None = None
    initial: int | None = None


@dataclass
class EmbeddingConfig:
    backend: str = "reference"
    dim: int = 64
    batch_size: int = 64
    seed: int = 0
    lowercase: bool = True
    endpoint: EndpointConfig | None = None


@dataclass
class StoreConfig:
    backend: str = "reference"
    index: IndexSpec = field(default_factory=IndexSpec)
    seed: int = 0
    capabilities: tuple = tuple(STORE_OPS)
    endpoint: EndpointConfig | None = None


@dataclass
class GenerationConfig:
    backend: str = "reference"
    template: str = DEFAULT_TEMPLATE
    max_tokens: int | None = None
    endpoint: EndpointConfig | None = None


@dataclass
class MonitorRunConfig:
    enabled: bool = True
    interval_ms: int = 100
    per_metric_buffer_bytes: int = 2 * 1024 * 1024
    probes: tuple = ("system", "process")
    watched_pids: tuple = ()
    watched_cgroups: tuple = ()
    budget_fraction: float = 0.5
    scrape_url: str | None = None


@dataclass
class RunConfig:
    run_id: str
    output_dir: str
    corpus: CorpusConfig
    workload: WorkloadSpec
    chunking: ChunkingSpec
    embedding: EmbeddingConfig
    store: StoreConfig
    query: QuerySpec
    rerank_backend: str
    generation: GenerationConfig
    monitor: MonitorRunConfig
    digest: str
    raw: dict


def config_digest(data: dict) -> str:
    blob = json.dumps(data, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def _line_map(text: str) -> dict[str, int]:
    """Dotted key path -> 1-based line number, from the YAML node tree."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    lines: dict[str, int] = {}

    def walk(node, prefix: str) -> None:
        if not isinstance(node, yaml.MappingNode):
            return
        for key_node, value_node in node.value:
            path = f"{prefix}.{key_node.value}" if prefix else str(key_node.value)
            lines[path] = key_node.start_mark.line + 1
            walk(value_node, path)

    if root is not None:
        walk(root, "")
    return lines


class _Validator:
    def __init__(self, lines: dict[str, int]):
        self.lines = lines
        self.diags: list[Diagnostic] = []

    def error(self, path: str, message: str) -> None:
        self.diags.append(Diagnostic(path=path, message=message, line=self.lines.get(path)))

    def section(self, data: dict, path: str, allowed: set[str]) -> dict:
        if data is None:
            return {}
        if not isinstance(data, dict):
            self.error(path, f"expected a mapping, got {type(data).__name__}")
            return {}
        for key in data:
            if key not in allowed:
                self.error(f"{path}.{key}" if path else str(key), "unknown key")
        return data

    def get(self, data: dict, path: str, key: str, types, default=None, required=False):
        if key not in data:
            if required:
                self.error(f"{path}.{key}" if path else key, "required key missing")
            return default
        value = data[key]
        if types is not None and not isinstance(value, types):
            type_names = getattr(types, "__name__", None) or "/".join(t.__name__ for t in types)
            self.error(f"{path}.{key}" if path else key,
                       f"expected {type_names}, got {type(value).__name__}")
            return default
        return value


def _endpoint_from(v: _Validator, data: dict | None, path: str) -> EndpointConfig | None:
    if data is None:
        return None
    data = v.section(data, path, {"url", "timeout_ms", "max_retries", "backoff_base_ms",
                                  "max_in_flight", "auth_token"})
    url = v.get(data, path, "url", str, required=True)
    if url is None:
        return None
    ep = EndpointConfig(
        base_url=url,
        timeout_ms=v.get(data, path, "timeout_ms", int, 10_000),
        max_retries=v.get(data, path, "max_retries", int, 2),
        backoff_base_ms=v.get(data, path, "backoff_base_ms", int, 50),
        max_in_flight=v.get(data, path, "max_in_flight", int, 8),
        auth_token=v.get(data, path, "auth_token", str),
    )
    try:
        ep.validate()
    except ValueError as exc:
        v.error(path, str(exc))
    return ep


def validate_config(path: str | Path) -> RunConfig:
    """Parse and fully validate a YAML run config.

    Raises ConfigParseError for unreadable YAML and SchemaError (carrying
    key-path + line diagnostics) for contract violations.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigParseError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigParseError(f"invalid YAML in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigParseError(f"config root must be a mapping, got {type(data).__name__}")
    return validate_config_data(data, _line_map(text))


def validate_config_data(data: dict, lines: dict[str, int] | None = None) -> RunConfig:
    v = _Validator(lines or {})
    v.section(data, "", {"run_id", "output_dir", "corpus", "workload", "pipeline", "monitor"})

    # corpus ------------------------------------------------------------------
    corpus_raw = v.section(data.get("corpus", {}), "corpus", {"path", "format", "limit", "initial"})
    corpus = CorpusConfig(
        path=v.get(corpus_raw, "corpus", "path", str, required=True) or "",
        format=v.get(corpus_raw, "corpus", "format", str, "plain_dir"),
        limit=v.get(corpus_raw, "corpus", "limit", int),
        initial=v.get(corpus_raw, "corpus", "initial", int),
    )
    if corpus.format not in ("plain_dir", "jsonl"):
        v.error("corpus.format", f"must be plain_dir|jsonl, got {corpus.format!r}")

    # workload ----------------------------------------------------------------
    wl = v.section(data.get("workload", {}), "workload",
                   {"mix", "access", "arrival", "duration_s", "total_requests", "seed", "batch_size"})
    mix_raw = v.section(wl.get("mix", {"query": 1.0}), "workload.mix",
                        {"query", "insert", "update", "removal"})
    mix = OperationMix(
        p_query=float(v.get(mix_raw, "workload.mix", "query", (int, float), 0.0)),
        p_insert=float(v.get(mix_raw, "workload.mix", "insert", (int, float), 0.0)),
        p_update=float(v.get(mix_raw, "workload.mix", "update", (int, float), 0.0)),
        p_removal=float(v.get(mix_raw, "workload.mix", "removal", (int, float), 0.0)),
    )
    access_raw = v.section(wl.get("access", {}), "workload.access", {"kind", "exponent", "seed"})
    access = AccessDistribution(
        kind=v.get(access_raw, "workload.access", "kind", str, "uniform"),
        exponent=float(v.get(access_raw, "workload.access", "exponent", (int, float), 1.0)),
        rank_permutation_seed=v.get(access_raw, "workload.access", "seed", int, 0),
    )
    arrival_raw = v.section(wl.get("arrival", {}), "workload.arrival",
                            {"kind", "rate", "concurrency", "workers"})
    arrival = ArrivalSpec(
        kind=v.get(arrival_raw, "workload.arrival", "kind", str, "closed"),
        rate=v.get(arrival_raw, "workload.arrival", "rate", (int, float)),
        concurrency=v.get(arrival_raw, "workload.arrival", "concurrency", int, 1),
        workers=v.get(arrival_raw, "workload.arrival", "workers", int, 4),
    )
    workload = WorkloadSpec(
        mix=mix,
        access=access,
        arrival=arrival,
        duration_s=v.get(wl, "workload", "duration_s", (int, float)),
        total_requests=v.get(wl, "workload", "total_requests", int),
        seed=v.get(wl, "workload", "seed", int, 0),
        query_batch_size=v.get(wl, "workload", "batch_size", int, 1),
    )
    try:
        workload.validate()
    except Exception as exc:
        v.error("workload.mix" if "probabilit" in str(exc) else "workload", str(exc))

    # pipeline ----------------------------------------------------------------
    pipe = v.section(data.get("pipeline", {}), "pipeline",
                     {"chunking", "embedding", "store", "retrieval", "rerank", "generation"})
    ch = v.section(pipe.get("chunking", {}), "pipeline.chunking",
                   {"mode", "size", "overlap", "separators", "max_len"})
    chunking = ChunkingSpec(
        mode=v.get(ch, "pipeline.chunking", "mode", str, "fixed"),
        size=v.get(ch, "pipeline.chunking", "size", int, 512),
        overlap=v.get(ch, "pipeline.chunking", "overlap", int, 0),
        separators=v.get(ch, "pipeline.chunking", "separators", list, [". ", "\n"]),
        max_len=v.get(ch, "pipeline.chunking", "max_len", int, 2048),
    )
    try:
        chunking.validate()
    except ValueError as exc:
        v.error("pipeline.chunking", str(exc))

    em = v.section(pipe.get("embedding", {}), "pipeline.embedding",
                   {"backend", "dim", "batch_size", "seed", "lowercase", "endpoint"})
    embedding = EmbeddingConfig(
        backend=v.get(em, "pipeline.embedding", "backend", str, "reference"),
        dim=v.get(em, "pipeline.embedding", "dim", int, 64),
        batch_size=v.get(em, "pipeline.embedding", "batch_size", int, 64),
        seed=v.get(em, "pipeline.embedding", "seed", int, 0),
        lowercase=v.get(em, "pipeline.embedding", "lowercase", bool, True),
        endpoint=_endpoint_from(v, em.get("endpoint"), "pipeline.embedding.endpoint"),
    )
    if embedding.backend not in BACKENDS["embedding"]:
        v.error("pipeline.embedding.backend", f"unregistered backend {embedding.backend!r}")
    if embedding.backend == "remote" and embedding.endpoint is None:
        v.error("pipeline.embedding.endpoint", "remote backend requires an endpoint")
    if embedding.dim < 8:
        v.error("pipeline.embedding.dim", "dim must be >= 8")

    st = v.section(pipe.get("store", {}), "pipeline.store",
                   {"backend", "index", "seed", "capabilities", "endpoint"})
    ix = v.section(st.get("index", {}), "pipeline.store.index",
                   {"kind", "nlist", "nprobe", "metric", "buffer_threshold", "m", "ef_construction"})
    index = IndexSpec(
        kind=v.get(ix, "pipeline.store.index", "kind", str, "Flat"),
        nlist=v.get(ix, "pipeline.store.index", "nlist", int, 16),
        nprobe=v.get(ix, "pipeline.store.index", "nprobe", int, 4),
        metric=v.get(ix, "pipeline.store.index", "metric", str, "cosine"),
        buffer_threshold=v.get(ix, "pipeline.store.index", "buffer_threshold", int, 1024),
        m=v.get(ix, "pipeline.store.index", "m", int, 16),
        ef_construction=v.get(ix, "pipeline.store.index", "ef_construction", int, 64),
    )
    try:
        index.validate()
    except ValueError as exc:
        key = "pipeline.store.index.nprobe" if "nprobe" in str(exc) else "pipeline.store.index"
        v.error(key, str(exc))
    caps = v.get(st, "pipeline.store", "capabilities", list)
    store = StoreConfig(
        backend=v.get(st, "pipeline.store", "backend", str, "reference"),
        index=index,
        seed=v.get(st, "pipeline.store", "seed", int, 0),
        capabilities=tuple(caps) if caps else tuple(STORE_OPS),
        endpoint=_endpoint_from(v, st.get("endpoint"), "pipeline.store.endpoint"),
    )
    if store.backend not in BACKENDS["store"]:
        v.error("pipeline.store.backend", f"unregistered backend {store.backend!r}")
    if store.backend == "remote" and store.endpoint is None:
        v.error("pipeline.store.endpoint", "remote backend requires an endpoint")
    missing_ops = REQUIRED_STORE_OPS - set(store.capabilities)
    if missing_ops:
        v.error("pipeline.store.capabilities",
                f"adapter does not support required ops: {sorted(missing_ops)}")

    rt = v.section(pipe.get("retrieval", {}), "pipeline.retrieval", {"k"})
    rr = v.section(pipe.get("rerank", {}), "pipeline.rerank", {"backend", "out_depth"})
    gn = v.section(pipe.get("generation", {}), "pipeline.generation",
                   {"backend", "template", "max_tokens", "endpoint"})
    query = QuerySpec(
        k=v.get(rt, "pipeline.retrieval", "k", int, 5),
        rerank_out=v.get(rr, "pipeline.rerank", "out_depth", int, 3),
        prompt_template=v.get(gn, "pipeline.generation", "template", str, DEFAULT_TEMPLATE),
    )
    try:
        query.validate()
    except ValueError as exc:
        v.error("pipeline.rerank.out_depth" if "rerank_out" in str(exc) else "pipeline.retrieval.k",
                f"{exc} (see pipeline.retrieval.k and pipeline.rerank.out_depth)")
    rerank_backend = v.get(rr, "pipeline.rerank", "backend", str, "reference")
    if rerank_backend not in BACKENDS["rerank"]:
        v.error("pipeline.rerank.backend", f"unregistered backend {rerank_backend!r}")
    generation = GenerationConfig(
        backend=v.get(gn, "pipeline.generation", "backend", str, "reference"),
        template=query.prompt_template,
        max_tokens=v.get(gn, "pipeline.generation", "max_tokens", int),
        endpoint=_endpoint_from(v, gn.get("endpoint"), "pipeline.generation.endpoint"),
    )
    if generation.backend not in BACKENDS["generation"]:
        v.error("pipeline.generation.backend", f"unregistered backend {generation.backend!r}")
    if generation.backend == "remote" and generation.endpoint is None:
        v.error("pipeline.generation.endpoint", "remote backend requires an endpoint")

    # monitor -----------------------------------------------------------------
    mon = v.section(data.get("monitor", {}), "monitor",
                    {"enabled", "interval_ms", "per_metric_buffer_bytes", "probes",
                     "watched_pids", "watched_cgroups", "budget_fraction", "scrape_url"})
    monitor = MonitorRunConfig(
        enabled=v.get(mon, "monitor", "enabled", bool, True),
        interval_ms=v.get(mon, "monitor", "interval_ms", int, 100),
        per_metric_buffer_bytes=v.get(mon, "monitor", "per_metric_buffer_bytes", int, 2 * 1024 * 1024),
        probes=tuple(v.get(mon, "monitor", "probes", list, ["system", "process"])),
        watched_pids=tuple(v.get(mon, "monitor", "watched_pids", list, [])),
        watched_cgroups=tuple(v.get(mon, "monitor", "watched_cgroups", list, [])),
        budget_fraction=float(v.get(mon, "monitor", "budget_fraction", (int, float), 0.5)),
        scrape_url=v.get(mon, "monitor", "scrape_url", str),
    )
    if monitor.enabled:
        if monitor.interval_ms < 1:
            v.error("monitor.interval_ms", "must be >= 1")
        if monitor.per_metric_buffer_bytes < 64 * 1024:
            v.error("monitor.per_metric_buffer_bytes", "must be >= 64 KiB")

    if v.diags:
        raise SchemaError(v.diags)

    output_dir = os.environ.get("RAGBENCH_OUT") or data.get("output_dir", "runs")
    return RunConfig(
        run_id=str(data.get("run_id", "run")),
        output_dir=str(output_dir),
        corpus=corpus,
        workload=workload,
        chunking=chunking,
        embedding=embedding,
        store=store,
        query=query,
        rerank_backend=rerank_backend,
        generation=generation,
        monitor=monitor,
        digest=config_digest(data),
        raw=data,
    )
