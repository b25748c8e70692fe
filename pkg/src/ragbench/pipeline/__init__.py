"""RAG pipeline stage abstractions, chunking, and request execution."""

from ragbench.pipeline.chunking import Chunker, chunk_document, chunk_fixed, chunk_separator
from ragbench.pipeline.execute import (
    ChunkCatalog,
    IndexStats,
    PipelineComponents,
    QueryOutcome,
    UpdateOutcome,
    apply_update,
    assemble_prompt,
    handle_query,
    handle_query_batch,
    index_corpus,
)
from ragbench.pipeline.model import (
    Chunk,
    Document,
    IndexSpec,
    QuerySpec,
    StageTiming,
    chunk_id_for,
)

__all__ = [
    "Chunk",
    "ChunkCatalog",
    "Chunker",
    "Document",
    "IndexSpec",
    "IndexStats",
    "PipelineComponents",
    "QueryOutcome",
    "QuerySpec",
    "StageTiming",
    "UpdateOutcome",
    "apply_update",
    "assemble_prompt",
    "chunk_document",
    "chunk_fixed",
    "chunk_id_for",
    "chunk_separator",
    "handle_query",
    "handle_query_batch",
    "index_corpus",
]
