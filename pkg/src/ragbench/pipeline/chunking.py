"""Document chunkers: fixed-stride and separator-based splitting.

Both chunkers record byte offsets of each chunk's core span into the parent
body so that the original document can be reconstructed byte-for-byte from
offsets alone.
"""

from __future__ import annotations

from ragbench.errors import InvalidChunkParams
from ragbench.pipeline.model import Chunk, ChunkingSpec, Document, chunk_id_for


def chunk_fixed(doc: Document, size: int, overlap: int = 0) -> list[Chunk]:
    """Split into uniformly sized segments of `size` bytes with `overlap` bytes
    shared between adjacent chunks.

    Chunk i covers [i*(size-overlap), min(i*(size-overlap)+size, len)); the
    first chunk whose window reaches the end of the document is the last one.
    """
    if overlap < 0 or size <= overlap:
        raise InvalidChunkParams(f"need size ({size}) > overlap ({overlap}) >= 0")
    body = doc.body
    if not body:
        return []
    stride = size - overlap
    spans: list[tuple[int, int]] = []
    i = 0
    while True:
        start = i * stride
        end = min(start + size, len(body))
        spans.append((start, end))
        if start + size >= len(body):
            break
        i += 1
    return _spans_to_chunks(doc, spans, overlap_segments=0)


def chunk_separator(
    doc: Document,
    separators: list[str],
    max_len: int,
    overlap: int = 0,
) -> list[Chunk]:
    """Split at separator boundaries, keeping each separator with the segment
    it terminates (required for byte-lossless reconstruction).

    Segments longer than `max_len` fall back to fixed-length splitting.
    `overlap` > 0 prepends the previous `overlap` segments' text to each
    chunk's retrieval text; offsets always reference the core segment.
    """
    if not separators:
        raise InvalidChunkParams("separators must be nonempty")
    if max_len <= 0:
        raise InvalidChunkParams(f"max_len must be positive, got {max_len}")
    if overlap < 0:
        raise InvalidChunkParams("overlap must be >= 0")
    body = doc.body
    if not body:
        return []
    seps = [s.encode("utf-8") for s in separators]

    spans: list[tuple[int, int]] = []
    pos = 0
    while pos < len(body):
        cut = -1
        cut_end = -1
        for sep in seps:
            idx = body.find(sep, pos)
            if idx >= 0 and (cut < 0 or idx < cut):
                cut = idx
                cut_end = idx + len(sep)
        seg_end = cut_end if cut >= 0 else len(body)
        # oversized segment: fixed-split fallback
        for sub_start in range(pos, seg_end, max_len):
            spans.append((sub_start, min(sub_start + max_len, seg_end)))
        pos = seg_end
    return _spans_to_chunks(doc, spans, overlap_segments=overlap)


def _spans_to_chunks(doc: Document, spans: list[tuple[int, int]], overlap_segments: int) -> list[Chunk]:
    chunks: list[Chunk] = []
    texts = [doc.body[s:e].decode("utf-8", errors="replace") for s, e in spans]
    for ordinal, ((start, end), text) in enumerate(zip(spans, texts)):
        embed_text = None
        if overlap_segments > 0 and ordinal > 0:
            lead = texts[max(0, ordinal - overlap_segments):ordinal]
            embed_text = "".join(lead) + text
        chunks.append(
            Chunk(
                chunk_id=chunk_id_for(doc.file_id, ordinal, 0),
                file_id=doc.file_id,
                start=start,
                end=end,
                text=text,
                version=0,
                ordinal=ordinal,
                embed_text=embed_text,
            )
        )
    return chunks


def chunk_document(doc: Document, spec: ChunkingSpec) -> list[Chunk]:
    spec.validate()
    if spec.mode == "fixed":
        return chunk_fixed(doc, spec.size, spec.overlap)
    return chunk_separator(doc, spec.separators, spec.max_len, spec.overlap)


class Chunker:
    """Callable chunker bound to a ChunkingSpec; shared by generator and executor."""

    def __init__(self, spec: ChunkingSpec):
        spec.validate()
        self.spec = spec

    def __call__(self, doc: Document) -> list[Chunk]:
        return chunk_document(doc, self.spec)
