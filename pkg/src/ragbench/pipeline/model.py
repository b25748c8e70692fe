"""Domain types for documents, chunks, and pipeline configuration."""

from __future__ import annotations

from dataclasses import dataclass, field


def chunk_id_for(file_id: str, ordinal: int, version: int) -> str:
    """Stable chunk identifier: derived from (file, position, version).

    The workload generator and the pipeline executor must agree on ids
    without communicating, so the scheme is purely positional.
    """
    return f"{file_id}#{ordinal}v{version}"


@dataclass(frozen=True)
class Document:
    file_id: str
    title: str
    body: bytes
    modality: str = "text"

    @property
    def text(self) -> str:
        return self.body.decode("utf-8", errors="replace")


@dataclass(frozen=True)
class Chunk:
    """A contiguous document segment.

    `start`/`end` are byte offsets of the core span into the parent body;
    `text` is exactly those bytes (decoded) at version 0. `embed_text`, when
    set, is the retrieval text with leading-context overlap prepended; offsets
    still reference the core span only.
    """

    chunk_id: str
    file_id: str
    start: int
    end: int
    text: str
    version: int = 0
    ordinal: int = 0
    embed_text: str | None = None

    def __post_init__(self):
        if self.end <= self.start:
            raise ValueError(f"chunk {self.chunk_id}: end {self.end} <= start {self.start}")

    @property
    def effective_text(self) -> str:
        """Text used for embedding/reranking/prompting (includes overlap context)."""
        return self.embed_text if self.embed_text is not None else self.text


@dataclass(frozen=True)
class IndexSpec:
    """Vector index configuration.

    kind 'Flat' is the exact exhaustive baseline; 'IVF' buffers incoming
    updates invisibly until the next rebuild; 'HybridIVF' additionally scans
    the update buffer at query time. `m` / `ef_construction` are reserved for
    graph backends and unused by the reference stores.
    """

    kind: str = "Flat"
    nlist: int = 16
    nprobe: int = 4
    metric: str = "cosine"
    buffer_threshold: int = 1024
    m: int = 16
    ef_construction: int = 64

    KINDS = ("Flat", "IVF", "HybridIVF")
    METRICS = ("cosine", "l2")

    def validate(self) -> None:
        if self.kind not in self.KINDS:
            raise ValueError(f"index kind must be one of {self.KINDS}, got {self.kind!r}")
        if self.metric not in self.METRICS:
            raise ValueError(f"metric must be one of {self.METRICS}, got {self.metric!r}")
        if not (1 <= self.nprobe <= self.nlist):
            raise ValueError(f"need 1 <= nprobe ({self.nprobe}) <= nlist ({self.nlist})")
        if self.buffer_threshold < 1:
            raise ValueError("buffer_threshold must be >= 1")


@dataclass(frozen=True)
class QuerySpec:
    k: int = 5
    rerank_out: int = 3
    prompt_template: str = "{question}\n{contexts}"

    def validate(self) -> None:
        if self.rerank_out < 1:
            raise ValueError("rerank_out must be >= 1")
        if self.rerank_out > self.k:
            raise ValueError(f"rerank_out ({self.rerank_out}) must be <= k ({self.k})")


STAGES = ("chunk", "embed", "insert", "build_index", "retrieve", "rerank", "prompt", "generate")


@dataclass
class StageTiming:
    stage: str
    start_ns: int
    end_ns: int
    batch_size: int = 1

    def __post_init__(self):
        if self.end_ns < self.start_ns:
            raise ValueError(f"stage {self.stage}: end before start")

    @property
    def duration_us(self) -> int:
        return (self.end_ns - self.start_ns) // 1000

    @property
    def duration_ms(self) -> float:
        return (self.end_ns - self.start_ns) / 1e6


@dataclass
class ChunkingSpec:
    """Chunker selection shared by the pipeline and the workload generator."""

    mode: str = "fixed"          # fixed | separator
    size: int = 512              # bytes per chunk (fixed mode)
    overlap: int = 0             # bytes (fixed) or trailing segments (separator)
    separators: list[str] = field(default_factory=lambda: [". ", "\n"])
    max_len: int = 2048          # separator mode: fallback split size

    def validate(self) -> None:
        if self.mode not in ("fixed", "separator"):
            raise ValueError(f"chunking mode must be fixed|separator, got {self.mode!r}")
        if self.mode == "fixed":
            if not (self.size > self.overlap >= 0):
                raise ValueError(f"need size ({self.size}) > overlap ({self.overlap}) >= 0")
        else:
            if not self.separators:
                raise ValueError("separator mode needs at least one separator")
            if self.max_len <= 0:
                raise ValueError("max_len must be positive")
