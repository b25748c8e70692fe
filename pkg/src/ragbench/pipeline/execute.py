"""Pipeline orchestration: corpus indexing and per-request execution with
stage-attributed timings."""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

import numpy as np

from ragbench.errors import (
    BadTemplate,
    DimensionMismatch,
    EmptyIndex,
    RagBenchError,
    StageError,
    UnknownFileId,
)
from ragbench.pipeline.model import Chunk, Document, QuerySpec, StageTiming

if TYPE_CHECKING:  # avoids a runtime cycle with ragbench.workload
    from ragbench.workload import QAEntry, Request

CONTEXT_DELIMITER_LINE = "\n---\n"

_KIND_INSERT = "insert"
_KIND_UPDATE = "update"
_KIND_REMOVAL = "removal"


class ChunkCatalog:
    """Live chunk registry plus an archive of every version ever indexed.

    The archive lets post-hoc quality evaluation resolve chunk ids that were
    superseded or removed after the query executed.
    """

    def __init__(self):
        self._live: dict[str, Chunk] = {}
        self._by_file: dict[str, set[str]] = {}
        self._archive: dict[str, Chunk] = {}
        self._lock = threading.Lock()

    def add(self, chunk: Chunk) -> None:
        with self._lock:
            self._live[chunk.chunk_id] = chunk
            self._by_file.setdefault(chunk.file_id, set()).add(chunk.chunk_id)
            self._archive[chunk.chunk_id] = chunk

    def remove(self, chunk_id: str) -> Chunk:
        with self._lock:
            chunk = self._live.pop(chunk_id, None)
            if chunk is None:
                raise UnknownFileId(f"chunk id {chunk_id!r} not live")
            self._by_file[chunk.file_id].discard(chunk_id)
            return chunk

    def remove_file(self, file_id: str) -> list[str]:
        with self._lock:
            ids = sorted(self._by_file.pop(file_id, set()))
            for cid in ids:
                self._live.pop(cid, None)
            return ids

    def get(self, chunk_id: str) -> Chunk | None:
        return self._live.get(chunk_id)

    def lookup(self, chunk_id: str) -> Chunk | None:
        """Archive lookup: resolves ids that are no longer live."""
        return self._archive.get(chunk_id)

    @property
    def live_count(self) -> int:
        return len(self._live)


@dataclass
class PipelineComponents:
    embedder: object
    store: object
    reranker: object
    generator: object
    chunker: Callable[[Document], list[Chunk]]
    query_spec: QuerySpec
    catalog: ChunkCatalog = field(default_factory=ChunkCatalog)
    generation_max_tokens: int | None = None


@dataclass
class IndexStats:
    chunk_s: float = 0.0
    embed_s: float = 0.0
    insert_s: float = 0.0
    build_s: float = 0.0
    chunk_count: int = 0
    index_bytes: int = 0
    raw_vector_bytes: int = 0

    def as_dict(self) -> dict:
        return {
            "chunk_s": self.chunk_s,
            "embed_s": self.embed_s,
            "insert_s": self.insert_s,
            "build_s": self.build_s,
            "chunk_count": self.chunk_count,
            "index_bytes": self.index_bytes,
            "raw_vector_bytes": self.raw_vector_bytes,
        }


@dataclass
class QueryOutcome:
    answer_text: str
    retrieved_ids: list[str]
    reranked_ids: list[str]
    timings: list[StageTiming]
    ttft_ms: float | None
    tpot_ms: float | None
    start_ns: int
    end_ns: int


@dataclass
class UpdateOutcome:
    timings: list[StageTiming]
    rebuilt: bool
    start_ns: int
    end_ns: int


def assemble_prompt(question: str, contexts: list[Chunk], template: str) -> str:
    """Substitute the two placeholders; contexts joined by the '---' line."""
    if template.count("{question}") != 1 or template.count("{contexts}") != 1:
        raise BadTemplate("template must contain {question} and {contexts} exactly once")
    joined = CONTEXT_DELIMITER_LINE.join(c.effective_text for c in contexts)
    return template.replace("{question}", question).replace("{contexts}", joined)


def index_corpus(
    documents: list[Document],
    components: PipelineComponents,
    batch_size: int = 64,
) -> IndexStats:
    """Chunk, embed (batched), insert, and build the index for a corpus."""
    embedder, store = components.embedder, components.store
    if getattr(embedder, "dim", None) != getattr(store, "dim", None):
        raise DimensionMismatch(
            f"embedder dim {getattr(embedder, 'dim', None)} != store dim {getattr(store, 'dim', None)}"
        )
    stats = IndexStats()
    chunks: list[Chunk] = []
    for doc in documents:
        t0 = time.perf_counter()
        doc_chunks = components.chunker(doc)
        stats.chunk_s += time.perf_counter() - t0
        chunks.extend(doc_chunks)
    stats.chunk_count = len(chunks)

    for batch_start in range(0, len(chunks), batch_size):
        batch = chunks[batch_start:batch_start + batch_size]
        texts = [c.effective_text for c in batch]
        t0 = time.perf_counter()
        try:
            vectors = embedder.embed(texts)
        except RagBenchError:
            raise
        except Exception as exc:
            raise StageError("embed", exc) from exc
        stats.embed_s += time.perf_counter() - t0
        t0 = time.perf_counter()
        for chunk, vec in zip(batch, vectors):
            try:
                store.insert(chunk.chunk_id, vec)
            except RagBenchError:
                raise
            except Exception as exc:
                raise StageError("insert", exc) from exc
            components.catalog.add(chunk)
        stats.insert_s += time.perf_counter() - t0

    t0 = time.perf_counter()
    try:
        store.build_index()
    except RagBenchError:
        raise
    except Exception as exc:
        raise StageError("build_index", exc) from exc
    stats.build_s = time.perf_counter() - t0
    store_stats = store.stats()
    stats.index_bytes = int(store_stats.get("index_bytes", 0))
    stats.raw_vector_bytes = int(store_stats.get("raw_vector_bytes", 0))
    return stats


def handle_query(qa: QAEntry, spec: QuerySpec, components: PipelineComponents) -> QueryOutcome:
    """Execute embed -> retrieve -> rerank -> prompt -> generate for one query."""
    outcomes = handle_query_batch([qa], spec, components)
    return outcomes[0]


def handle_query_batch(
    qas: list[QAEntry],
    spec: QuerySpec,
    components: PipelineComponents,
) -> list[QueryOutcome]:
    """Batched query execution: one shared embed call, then sequential
    per-query retrieve/rerank/prompt/generate.

    For batches of one, the per-query stage durations account for >=95% of
    the end-to-end window; for larger batches, later queries' end-to-end
    windows include their predecessors' generation time (the shared embed
    timing carries batch_size for attribution).
    """
    spec.validate()
    store, catalog = components.store, components.catalog
    if getattr(store, "count", 0) == 0:
        raise EmptyIndex("query against empty index")

    n = len(qas)
    t0 = time.perf_counter_ns()
    try:
        qvecs = components.embedder.embed([qa.question for qa in qas])
    except RagBenchError:
        raise
    except Exception as exc:
        raise StageError("embed", exc) from exc
    t1 = time.perf_counter_ns()
    embed_timing = StageTiming("embed", t0, t1, batch_size=n)

    # stage windows tile the request: each boundary timestamp closes one stage
    # and opens the next, so every nanosecond is attributed to exactly one stage
    outcomes: list[QueryOutcome] = []
    mark = t1
    for qa, qvec in zip(qas, qvecs):
        timings = [embed_timing]
        try:
            candidates = store.search(np.asarray(qvec), spec.k)
        except RagBenchError:
            raise
        except Exception as exc:
            raise StageError("retrieve", exc) from exc
        after_retrieve = time.perf_counter_ns()
        timings.append(StageTiming("retrieve", mark, after_retrieve))

        retrieved_ids = [cid for cid, _ in candidates]
        texted = []
        for cid in retrieved_ids:
            chunk = catalog.get(cid)
            if chunk is not None:
                texted.append((cid, chunk.effective_text))
        try:
            reranked_ids = components.reranker.rerank(qa.question, texted, spec.rerank_out)
        except RagBenchError:
            raise
        except Exception as exc:
            raise StageError("rerank", exc) from exc
        after_rerank = time.perf_counter_ns()
        timings.append(StageTiming("rerank", after_retrieve, after_rerank))

        contexts = [c for c in (catalog.get(cid) for cid in reranked_ids) if c is not None]
        prompt = assemble_prompt(qa.question, contexts, spec.prompt_template)
        after_prompt = time.perf_counter_ns()
        timings.append(StageTiming("prompt", after_rerank, after_prompt))

        try:
            result = components.generator.generate(prompt, components.generation_max_tokens)
        except RagBenchError:
            raise
        except Exception as exc:
            raise StageError("generate", exc) from exc
        after_generate = time.perf_counter_ns()
        timings.append(StageTiming("generate", after_prompt, after_generate))

        outcomes.append(
            QueryOutcome(
                answer_text=result.text,
                retrieved_ids=retrieved_ids,
                reranked_ids=reranked_ids,
                timings=timings,
                ttft_ms=result.ttft_ms,
                tpot_ms=result.tpot_ms,
                start_ns=t0,
                end_ns=after_generate,
            )
        )
        mark = after_generate
    return outcomes


def apply_update(req: Request, components: PipelineComponents) -> UpdateOutcome:
    """Apply an insert/update/removal request to the store and catalog.

    Update is delete-then-insert at chunk granularity; removal deletes every
    chunk of the file. Store mutation time is recorded under the 'insert'
    stage; buffer-triggered rebuilds surface as 'build_index' timings.
    """
    store, catalog = components.store, components.catalog
    timings: list[StageTiming] = []
    rebuilt = False
    start_ns = time.perf_counter_ns()

    if req.kind == _KIND_INSERT:
        doc = req.insert_document
        if doc is None:
            doc = Document(file_id=req.target_file_id or "", title="", body=(req.payload or "").encode())
        c0 = time.perf_counter_ns()
        chunks = components.chunker(doc)
        c1 = time.perf_counter_ns()
        timings.append(StageTiming("chunk", c0, c1))
        rebuilt = _embed_and_insert(chunks, components, timings)
    elif req.kind == _KIND_UPDATE:
        if req.update_new_chunk is None or req.update_old_chunk_id is None:
            raise ValueError("update request missing chunk payload")
        e0 = time.perf_counter_ns()
        vec = components.embedder.embed([req.update_new_chunk.effective_text])[0]
        e1 = time.perf_counter_ns()
        timings.append(StageTiming("embed", e0, e1, batch_size=1))
        i0 = time.perf_counter_ns()
        store.delete(req.update_old_chunk_id)
        catalog.remove(req.update_old_chunk_id)
        outcome = store.insert(req.update_new_chunk.chunk_id, vec)
        catalog.add(req.update_new_chunk)
        i1 = time.perf_counter_ns()
        timings.append(StageTiming("insert", i0, i1))
        if outcome.rebuilt:
            rebuilt = True
            timings.append(StageTiming("build_index", i1 - int(outcome.rebuild_duration_s * 1e9), i1))
    elif req.kind == _KIND_REMOVAL:
        i0 = time.perf_counter_ns()
        ids = catalog.remove_file(req.target_file_id or "")
        if not ids:
            raise UnknownFileId(f"file id {req.target_file_id!r} has no live chunks")
        for cid in ids:
            store.delete(cid)
        i1 = time.perf_counter_ns()
        timings.append(StageTiming("insert", i0, i1))
    else:
        raise ValueError(f"apply_update cannot handle kind {req.kind!r}")

    end_ns = time.perf_counter_ns()
    return UpdateOutcome(timings=timings, rebuilt=rebuilt, start_ns=start_ns, end_ns=end_ns)


def _embed_and_insert(chunks: list[Chunk], components: PipelineComponents,
                      timings: list[StageTiming]) -> bool:
    if not chunks:
        return False
    e0 = time.perf_counter_ns()
    vectors = components.embedder.embed([c.effective_text for c in chunks])
    e1 = time.perf_counter_ns()
    timings.append(StageTiming("embed", e0, e1, batch_size=len(chunks)))
    rebuilt = False
    i0 = time.perf_counter_ns()
    rebuild_s = 0.0
    for chunk, vec in zip(chunks, vectors):
        outcome = components.store.insert(chunk.chunk_id, vec)
        components.catalog.add(chunk)
        if outcome.rebuilt:
            rebuilt = True
            rebuild_s += outcome.rebuild_duration_s
    i1 = time.perf_counter_ns()
    timings.append(StageTiming("insert", i0, i1))
    if rebuilt:
        timings.append(StageTiming("build_index", i1 - int(rebuild_s * 1e9), i1))
    return rebuilt
