"""Shared fixtures: synthetic corpora and run-config factories."""

from __future__ import annotations

import random
from pathlib import Path

import pytest

from ragbench.corpus import CorpusManifest
from ragbench.pipeline.chunking import Chunker
from ragbench.pipeline.model import ChunkingSpec, Document

# Word bank for distinctive synthetic documents: every content token carries
# the document index, so hash-embedding retrieval separates documents cleanly.
_FRAMES = [
    "landmark{t} tower{t} region{t} stands since {year}. span{t} gauge{t} measures {length} meters.",
    "archive{t} vault{t} district{t} opened in {year}. shelf{t} record{t} holds {length} volumes.",
    "reactor{t} grid{t} sector{t} started in {year}. coil{t} module{t} outputs {length} units.",
]


def make_documents(n: int, seed: int = 1) -> list[Document]:
    rng = random.Random(seed)
    docs = []
    for i in range(n):
        tag = f"{i:03d}"
        frame = _FRAMES[i % len(_FRAMES)]
        text = frame.format(t=tag, year=rng.randint(1500, 2020), length=rng.randint(50, 900))
        docs.append(Document(file_id=f"d{tag}", title=f"d{tag}", body=text.encode()))
    return docs


def make_manifest(n: int, initial: int | None = None, seed: int = 1) -> CorpusManifest:
    docs = make_documents(n, seed)
    return CorpusManifest(documents=docs, initial_count=initial if initial is not None else n)


def write_corpus_dir(path: Path, n: int, seed: int = 1) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    for doc in make_documents(n, seed):
        (path / f"{doc.file_id}.txt").write_text(doc.text, encoding="utf-8")
    return path


@pytest.fixture
def whole_doc_chunker() -> Chunker:
    return Chunker(ChunkingSpec(mode="fixed", size=4096, overlap=0))


@pytest.fixture
def sentence_chunker() -> Chunker:
    return Chunker(ChunkingSpec(mode="separator", separators=[". "], max_len=400))


def config_yaml(
    corpus_path: Path,
    out_dir: Path,
    run_id: str = "t",
    initial: int | None = None,
    mix: str = "{query: 1.0}",
    total_requests: int = 50,
    seed: int = 0,
    index_kind: str = "Flat",
    nlist: int = 4,
    nprobe: int = 4,
    buffer_threshold: int = 16,
    dim: int = 128,
    k: int = 5,
    extra: str = "",
) -> str:
    initial_line = f"  initial: {initial}\n" if initial is not None else ""
    return f"""\
run_id: {run_id}
output_dir: {out_dir}
corpus:
  path: {corpus_path}
  format: plain_dir
{initial_line}workload:
  mix: {mix}
  access: {{kind: uniform, seed: 1}}
  arrival: {{kind: closed, concurrency: 1}}
  total_requests: {total_requests}
  seed: {seed}
pipeline:
  chunking: {{mode: fixed, size: 4096}}
  embedding: {{dim: {dim}, batch_size: 64}}
  store: {{index: {{kind: {index_kind}, nlist: {nlist}, nprobe: {nprobe}, buffer_threshold: {buffer_threshold}}}}}
  retrieval: {{k: {k}}}
  rerank: {{out_depth: 3}}
monitor:
  enabled: false
{extra}"""
