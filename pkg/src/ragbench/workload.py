"""Mixed read/write workload generation.

Produces a deterministic, timed stream of query/insert/update/removal
requests from a corpus manifest. Updates carry rule-mutated chunk payloads
plus matching fill-in-the-blank QA pairs so that freshness is checkable by
exact match downstream.
"""

from __future__ import annotations

import bisect
import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Sequence

from ragbench.corpus import CorpusManifest
from ragbench.errors import (
    EmptyPopulation,
    EmptyQuestionPool,
    ExhaustedCorpus,
    InvalidMix,
    NoMutableToken,
)
from ragbench.pipeline.model import Chunk, Document, chunk_id_for
from ragbench.textutil import BLANK, sentence_spans

KIND_QUERY = "query"
KIND_INSERT = "insert"
KIND_UPDATE = "update"
KIND_REMOVAL = "removal"
KINDS = (KIND_QUERY, KIND_INSERT, KIND_UPDATE, KIND_REMOVAL)

# standalone digit runs only; digits embedded in words are not numeric tokens
_NUMERIC_RE = re.compile(r"(?<![A-Za-z0-9_])\d+(?![A-Za-z0-9_])")
_WORD_RE = re.compile(r"[A-Za-z][A-Za-z0-9]*")

# Replacement pool for noun-phrase mutations. Deterministic and never equal to
# the original token (collision advances to the next entry).
SUBSTITUTION_WORDS = (
    "Falcon", "Harbor", "Crimson", "Juniper", "Obsidian", "Meridian",
    "Lantern", "Quartz", "Bastion", "Cedar", "Ivory", "Monsoon",
    "Pinnacle", "Saffron", "Tundra", "Vermilion", "Willow", "Zephyr",
)


@dataclass(frozen=True)
class OperationMix:
    p_query: float = 1.0
    p_insert: float = 0.0
    p_update: float = 0.0
    p_removal: float = 0.0

    def validate(self) -> None:
        probs = (self.p_query, self.p_insert, self.p_update, self.p_removal)
        if any(p < 0 for p in probs):
            raise InvalidMix(f"negative probability in {probs}")
        total = sum(probs)
        if abs(total - 1.0) > 1e-9:
            raise InvalidMix(f"operation probabilities sum to {total}, expected 1.0")

    def as_dict(self) -> dict[str, float]:
        return {
            KIND_QUERY: self.p_query,
            KIND_INSERT: self.p_insert,
            KIND_UPDATE: self.p_update,
            KIND_REMOVAL: self.p_removal,
        }


@dataclass(frozen=True)
class AccessDistribution:
    kind: str = "uniform"  # uniform | zipfian
    exponent: float = 1.0
    rank_permutation_seed: int = 0

    def validate(self) -> None:
        if self.kind not in ("uniform", "zipfian"):
            raise ValueError(f"access kind must be uniform|zipfian, got {self.kind!r}")
        if self.exponent < 0:
            raise ValueError("zipfian exponent must be nonnegative")


@dataclass(frozen=True)
class ArrivalSpec:
    kind: str = "closed"  # closed | open_fixed | open_poisson
    rate: float | None = None
    concurrency: int = 1
    workers: int = 4  # dispatcher pool for open-loop runs

    def validate(self) -> None:
        if self.kind not in ("closed", "open_fixed", "open_poisson"):
            raise ValueError(f"arrival kind must be closed|open_fixed|open_poisson, got {self.kind!r}")
        if self.kind == "closed":
            if self.concurrency < 1:
                raise ValueError("closed-loop concurrency must be >= 1")
        else:
            if self.rate is None or self.rate <= 0:
                raise ValueError("open-loop arrival requires rate > 0")
            if self.workers < 1:
                raise ValueError("open-loop workers must be >= 1")


@dataclass(frozen=True)
class WorkloadSpec:
    mix: OperationMix = field(default_factory=OperationMix)
    access: AccessDistribution = field(default_factory=AccessDistribution)
    arrival: ArrivalSpec = field(default_factory=ArrivalSpec)
    duration_s: float | None = None
    total_requests: int | None = None
    seed: int = 0
    query_batch_size: int = 1

    def validate(self) -> None:
        self.mix.validate()
        self.access.validate()
        self.arrival.validate()
        if (self.duration_s is None) == (self.total_requests is None):
            raise ValueError("exactly one of duration_s / total_requests must be set")
        if self.duration_s is not None and self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if self.total_requests is not None and self.total_requests < 1:
            raise ValueError("total_requests must be >= 1")
        if self.query_batch_size < 1:
            raise ValueError("query_batch_size must be >= 1")


@dataclass(frozen=True)
class QAEntry:
    question: str
    expected_answer: str
    target_chunk_id: str
    version: int
    target_file_id: str


@dataclass(frozen=True)
class MutationResult:
    mutated_text: str
    replaced_span: tuple[int, int]  # byte offsets of the original token
    original_token: str
    replacement_token: str
    char_span: tuple[int, int]      # same span in str coordinates


@dataclass(frozen=True)
class Request:
    kind: str
    sequence_no: int
    target_file_id: str | None = None
    payload: str | None = None
    qa: QAEntry | None = None
    scheduled_at: float | None = None  # seconds from run start; open-loop only
    update_old_chunk_id: str | None = None
    update_new_chunk: Chunk | None = None
    insert_document: Document | None = None

    def trace_record(self) -> dict:
        return {
            "sequence_no": self.sequence_no,
            "kind": self.kind,
            "target": self.target_file_id,
            "scheduled_at_ms": None if self.scheduled_at is None else round(self.scheduled_at * 1000.0, 3),
        }


def sample_operation(rng: random.Random, mix: OperationMix) -> str:
    """Draw one operation kind according to the mix probabilities."""
    mix.validate()
    x = rng.random()
    acc = 0.0
    pairs = (
        (KIND_QUERY, mix.p_query),
        (KIND_INSERT, mix.p_insert),
        (KIND_UPDATE, mix.p_update),
        (KIND_REMOVAL, mix.p_removal),
    )
    for kind, p in pairs:
        acc += p
        if x < acc:
            return kind
    return KIND_REMOVAL if mix.p_removal > 0 else KIND_QUERY  # x == 1.0 edge


class AccessSampler:
    """Samples file ids under a uniform or Zipfian popularity distribution.

    Zipfian rank-r probability is r^(-s) / sum_i i^(-s). Ranks are assigned by
    a seeded permutation of the initial population; ids added later take the
    next (coldest) ranks, removed ids drop out with the pmf renormalized over
    the survivors.
    """

    def __init__(self, access: AccessDistribution, population: Sequence[str]):
        access.validate()
        self.access = access
        ranked = list(population)
        if access.kind == "zipfian":
            random.Random(access.rank_permutation_seed).shuffle(ranked)
        self._ranked = ranked
        self._alive = {fid: True for fid in ranked}
        self._cum: list[float] | None = None
        self._cum_ids: list[str] | None = None

    def _weight(self, rank_index: int) -> float:
        if self.access.kind == "zipfian":
            return float(rank_index + 1) ** (-self.access.exponent)
        return 1.0

    def add(self, file_id: str) -> None:
        self._ranked.append(file_id)
        self._alive[file_id] = True
        self._cum = None

    def remove(self, file_id: str) -> None:
        self._alive[file_id] = False
        self._cum = None

    def live_count(self) -> int:
        return sum(1 for v in self._alive.values() if v)

    def _rebuild(self) -> None:
        cum: list[float] = []
        ids: list[str] = []
        total = 0.0
        for i, fid in enumerate(self._ranked):
            if not self._alive[fid]:
                continue
            total += self._weight(i)
            cum.append(total)
            ids.append(fid)
        self._cum = cum
        self._cum_ids = ids

    def sample(self, rng: random.Random, predicate: Callable[[str], bool] | None = None) -> str:
        if predicate is None:
            if self._cum is None:
                self._rebuild()
            cum, ids = self._cum, self._cum_ids
        else:
            cum, ids = [], []
            total = 0.0
            for i, fid in enumerate(self._ranked):
                if self._alive[fid] and predicate(fid):
                    total += self._weight(i)
                    cum.append(total)
                    ids.append(fid)
        if not ids:
            raise EmptyPopulation("no live file ids to sample from")
        x = rng.random() * cum[-1]
        return ids[bisect.bisect_right(cum, x)] if x < cum[-1] else ids[-1]


def sample_target(rng: random.Random, access: AccessDistribution, population: Sequence[str]) -> str:
    """One-shot target draw; builds a sampler per call. For bulk draws over a
    fixed population construct an AccessSampler once and reuse it."""
    if not population:
        raise EmptyPopulation("population is empty")
    return AccessSampler(access, population).sample(rng)


def _find_mutable_token(text: str) -> tuple[str, int, int] | None:
    """Return (kind, char_start, char_end) of the mutation target.

    Prefers the first numeric token; otherwise the longest capitalized token
    that is not sentence-initial (ties keep the earliest).
    """
    m = _NUMERIC_RE.search(text)
    if m:
        return ("numeric", m.start(), m.end())
    initial_starts = set()
    for s, e in sentence_spans(text):
        w = _WORD_RE.search(text, s, e)
        if w:
            initial_starts.add(w.start())
    best: re.Match | None = None
    for w in _WORD_RE.finditer(text):
        if w.start() in initial_starts:
            continue
        if not w.group()[0].isupper():
            continue
        if best is None or len(w.group()) > len(best.group()):
            best = w
    if best is None:
        return None
    return ("noun", best.start(), best.end())


def mutate_chunk(chunk: Chunk, rng: random.Random) -> MutationResult:
    """Replace one factual token in the chunk text.

    Numeric targets get a different same-length digit string drawn from the
    rng; capitalized targets get a word from the built-in substitution list.
    """
    text = chunk.text
    if not text:
        raise NoMutableToken("chunk text is empty")
    found = _find_mutable_token(text)
    if found is None:
        raise NoMutableToken(f"no numeric or capitalized candidate in chunk {chunk.chunk_id}")
    kind, cs, ce = found
    original = text[cs:ce]
    if kind == "numeric":
        while True:
            replacement = "".join(rng.choice("0123456789") for _ in range(len(original)))
            if replacement != original:
                break
    else:
        idx = rng.randrange(len(SUBSTITUTION_WORDS))
        if SUBSTITUTION_WORDS[idx].lower() == original.lower():
            idx = (idx + 1) % len(SUBSTITUTION_WORDS)
        replacement = SUBSTITUTION_WORDS[idx]
    mutated = text[:cs] + replacement + text[ce:]
    byte_start = len(text[:cs].encode("utf-8"))
    byte_end = byte_start + len(original.encode("utf-8"))
    return MutationResult(
        mutated_text=mutated,
        replaced_span=(byte_start, byte_end),
        original_token=original,
        replacement_token=replacement,
        char_span=(cs, ce),
    )


def _blank_question(text: str, token_start: int, token_end: int) -> str:
    """Fill-in-the-blank question from the sentence containing [start, end)."""
    for s, e in sentence_spans(text):
        if s <= token_start < e:
            blanked = text[s:token_start] + BLANK + text[token_end:e]
            return "Fill in the blank: " + blanked.strip()
    blanked = text[:token_start] + BLANK + text[token_end:]
    return "Fill in the blank: " + blanked.strip()


def generate_question(mutation: MutationResult, chunk: Chunk) -> QAEntry:
    """QA pair whose answer is the token the mutation substituted in."""
    cs = mutation.char_span[0]
    ce = cs + len(mutation.replacement_token)
    question = _blank_question(mutation.mutated_text, cs, ce)
    new_version = chunk.version + 1
    return QAEntry(
        question=question,
        expected_answer=mutation.replacement_token,
        target_chunk_id=chunk_id_for(chunk.file_id, chunk.ordinal, new_version),
        version=new_version,
        target_file_id=chunk.file_id,
    )


def seed_question(chunk: Chunk) -> QAEntry | None:
    """Version-0 QA pair derived from unmodified chunk text (the answer token
    is left in place, so the knowledge base can answer it as ingested)."""
    found = _find_mutable_token(chunk.text)
    if found is None:
        return None
    _, cs, ce = found
    return QAEntry(
        question=_blank_question(chunk.text, cs, ce),
        expected_answer=chunk.text[cs:ce],
        target_chunk_id=chunk.chunk_id,
        version=0,
        target_file_id=chunk.file_id,
    )


class WorkloadGenerator:
    """Deterministic request-stream generator.

    All state (liveness, chunk versions, question pool) lives here; the
    emitted stream is fully determined by (spec, manifest, chunker).
    """

    def __init__(self, spec: WorkloadSpec, manifest: CorpusManifest, chunker: Callable[[Document], list[Chunk]]):
        spec.validate()
        self.spec = spec
        self.manifest = manifest
        self.chunker = chunker

        seed = spec.seed
        self._rng_op = random.Random(f"{seed}:op")
        self._rng_target = random.Random(f"{seed}:target")
        self._rng_chunk = random.Random(f"{seed}:chunk")
        self._rng_arrival = random.Random(f"{seed}:arrival")

        # live chunk state per file: ordinal -> current Chunk
        self.live_chunks: dict[str, dict[int, Chunk]] = {}
        self.question_pool: list[QAEntry] = []
        self._file_questions: dict[str, list[QAEntry]] = {}
        self._sequence = 0
        self._reserve = iter(manifest.reserve_documents)

        initial_ids = []
        for doc in manifest.initial_documents:
            chunks = chunker(doc)
            if not chunks:
                continue
            self.live_chunks[doc.file_id] = {c.ordinal: c for c in chunks}
            initial_ids.append(doc.file_id)
            entry = seed_question(chunks[0])
            if entry is not None:
                self._append_question(entry)
        self.sampler = AccessSampler(spec.access, initial_ids)

    # -- pool bookkeeping ------------------------------------------------

    def _append_question(self, entry: QAEntry) -> None:
        self.question_pool.append(entry)
        self._file_questions.setdefault(entry.target_file_id, []).append(entry)

    def _has_question(self, file_id: str) -> bool:
        return bool(self._file_questions.get(file_id))

    # -- request construction ---------------------------------------------

    def build_request(self, kind: str, scheduled_at: float | None = None) -> Request:
        """Construct the payload for one operation and advance generator state."""
        seq = self._sequence
        if kind == KIND_QUERY:
            try:
                target = self.sampler.sample(self._rng_target, predicate=self._has_question)
            except EmptyPopulation as exc:
                raise EmptyQuestionPool("no live file has an eligible question") from exc
            entry = self._file_questions[target][-1]  # latest version preferred
            req = Request(kind=kind, sequence_no=seq, target_file_id=target, qa=entry,
                          scheduled_at=scheduled_at)
        elif kind == KIND_INSERT:
            doc = next(self._reserve, None)
            if doc is None:
                raise ExhaustedCorpus("no unseen corpus documents remain for insert")
            chunks = self.chunker(doc)
            if chunks:  # chunkless documents never become update/removal targets
                self.live_chunks[doc.file_id] = {c.ordinal: c for c in chunks}
                self.sampler.add(doc.file_id)
                entry = seed_question(chunks[0])
                if entry is not None:
                    self._append_question(entry)
            req = Request(kind=kind, sequence_no=seq, target_file_id=doc.file_id,
                          payload=doc.text, insert_document=doc, scheduled_at=scheduled_at)
        elif kind == KIND_UPDATE:
            req = self._build_update(seq, scheduled_at)
        elif kind == KIND_REMOVAL:
            target = self.sampler.sample(self._rng_target)
            self.sampler.remove(target)
            self.live_chunks.pop(target, None)
            self._file_questions.pop(target, None)
            req = Request(kind=kind, sequence_no=seq, target_file_id=target,
                          scheduled_at=scheduled_at)
        else:
            raise ValueError(f"unknown operation kind {kind!r}")
        self._sequence += 1
        return req

    def _build_update(self, seq: int, scheduled_at: float | None) -> Request:
        target = self.sampler.sample(self._rng_target)
        chunks = self.live_chunks[target]
        ordinals = sorted(chunks)
        pick = self._rng_chunk.randrange(len(ordinals))
        rng_mut = random.Random(f"{self.spec.seed}:mut:{seq}")
        mutation = None
        chosen = None
        for off in range(len(ordinals)):
            candidate = chunks[ordinals[(pick + off) % len(ordinals)]]
            try:
                mutation = mutate_chunk(candidate, rng_mut)
                chosen = candidate
                break
            except NoMutableToken:
                continue
        if mutation is None or chosen is None:
            raise NoMutableToken(f"no mutable chunk in file {target!r}")
        entry = generate_question(mutation, chosen)
        new_chunk = Chunk(
            chunk_id=entry.target_chunk_id,
            file_id=chosen.file_id,
            start=chosen.start,
            end=chosen.end,
            text=mutation.mutated_text,
            version=chosen.version + 1,
            ordinal=chosen.ordinal,
        )
        chunks[chosen.ordinal] = new_chunk
        self._append_question(entry)
        return Request(
            kind=KIND_UPDATE,
            sequence_no=seq,
            target_file_id=target,
            payload=mutation.mutated_text,
            qa=entry,
            update_old_chunk_id=chosen.chunk_id,
            update_new_chunk=new_chunk,
            scheduled_at=scheduled_at,
        )

    # -- stream -------------------------------------------------------------

    def _next_scheduled(self, index: int, prev: float) -> float | None:
        arr = self.spec.arrival
        if arr.kind == "closed":
            return None
        if arr.kind == "open_fixed":
            return index / arr.rate
        return prev + self._rng_arrival.expovariate(arr.rate)

    def requests(self) -> Iterator[Request]:
        """Yield the request stream; bounded by total_requests or, for
        open-loop arrivals, by duration_s. Closed-loop duration runs are
        unbounded here (the driver stops pulling at the deadline)."""
        index = 0
        clock = 0.0
        while True:
            if self.spec.total_requests is not None and index >= self.spec.total_requests:
                return
            scheduled = self._next_scheduled(index, clock)
            if scheduled is not None:
                clock = scheduled
                if self.spec.duration_s is not None and scheduled >= self.spec.duration_s:
                    return
            kind = sample_operation(self._rng_op, self.spec.mix)
            yield self.build_request(kind, scheduled_at=scheduled)
            index += 1


def generate_workload(
    spec: WorkloadSpec,
    manifest: CorpusManifest,
    chunker: Callable[[Document], list[Chunk]],
) -> list[Request]:
    """Materialize a bounded request stream (requires total_requests or an
    open-loop arrival with duration)."""
    if spec.total_requests is None and spec.arrival.kind == "closed":
        raise ValueError("closed-loop duration workloads must be streamed, not materialized")
    return list(WorkloadGenerator(spec, manifest, chunker).requests())


def write_stream_trace(requests: Sequence[Request], path: str | Path) -> None:
    """Line-delimited replay trace: {sequence_no, kind, target, scheduled_at_ms}."""
    with open(path, "w", encoding="utf-8") as fh:
        for req in requests:
            fh.write(json.dumps(req.trace_record(), sort_keys=True) + "\n")
