"""Corpus ingestion: plain directories and JSONL files into a document manifest."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from ragbench.errors import DuplicateId, MalformedRecord
from ragbench.pipeline.model import Document


@dataclass
class CorpusManifest:
    """Ordered document set for one run.

    The first `initial_count` documents are indexed before the workload
    starts; the remainder form the reserve that Insert operations draw from.
    """

    documents: list[Document]
    initial_count: int
    digest: str = ""
    source: str = ""

    def __post_init__(self):
        if not self.digest:
            h = hashlib.sha256()
            for doc in self.documents:
                h.update(doc.file_id.encode())
                h.update(b"\x00")
                h.update(doc.body)
                h.update(b"\x01")
            self.digest = h.hexdigest()[:16]

    @property
    def initial_documents(self) -> list[Document]:
        return self.documents[: self.initial_count]

    @property
    def reserve_documents(self) -> list[Document]:
        return self.documents[self.initial_count:]

    def summary(self) -> dict:
        return {
            "documents": len(self.documents),
            "initial": self.initial_count,
            "reserve": len(self.documents) - self.initial_count,
            "bytes": sum(len(d.body) for d in self.documents),
            "digest": self.digest,
            "source": self.source,
        }


def ingest_corpus(
    path: str | Path,
    format: str = "plain_dir",
    limit: int | None = None,
    initial: int | None = None,
) -> CorpusManifest:
    """Load documents from `path`, deterministically ordered by sorted id.

    `limit` truncates the sorted document list; `initial` caps how many of
    those are indexed up front (default: all of them, leaving no Insert
    reserve).
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"corpus path does not exist: {path}")
    if format == "plain_dir":
        docs = _ingest_plain_dir(path)
    elif format == "jsonl":
        docs = _ingest_jsonl(path)
    else:
        raise ValueError(f"unknown corpus format {format!r}")

    docs.sort(key=lambda d: d.file_id)
    if limit is not None:
        docs = docs[:limit]
    initial_count = len(docs) if initial is None else min(initial, len(docs))
    return CorpusManifest(documents=docs, initial_count=initial_count, source=str(path))


def _ingest_plain_dir(path: Path) -> list[Document]:
    if not path.is_dir():
        raise ValueError(f"plain_dir corpus must be a directory: {path}")
    docs = []
    seen: set[str] = set()
    for p in sorted(path.iterdir()):
        if not p.is_file():
            continue
        file_id = p.name
        if file_id in seen:
            raise DuplicateId(f"duplicate document id {file_id!r}")
        seen.add(file_id)
        docs.append(Document(file_id=file_id, title=p.stem, body=p.read_bytes()))
    return docs


def _ingest_jsonl(path: Path) -> list[Document]:
    docs = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"invalid JSON: {exc}", line_no) from exc
            if not isinstance(rec, dict):
                raise MalformedRecord("record is not an object", line_no)
            for key in ("id", "text"):
                if key not in rec:
                    raise MalformedRecord(f"missing required field {key!r}", line_no)
            file_id = str(rec["id"])
            if file_id in seen:
                raise DuplicateId(f"duplicate document id {file_id!r} at line {line_no}")
            seen.add(file_id)
            docs.append(
                Document(
                    file_id=file_id,
                    title=str(rec.get("title", file_id)),
                    body=str(rec["text"]).encode("utf-8"),
                )
            )
    return docs
