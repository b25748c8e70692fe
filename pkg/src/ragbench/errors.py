"""Exception taxonomy shared across the harness."""

from __future__ import annotations


class RagBenchError(Exception):
    """Base class for all harness errors."""


# --- workload ---------------------------------------------------------------

class InvalidMix(RagBenchError):
    pass


class EmptyPopulation(RagBenchError):
    pass


class NoMutableToken(RagBenchError):
    pass


class ExhaustedCorpus(RagBenchError):
    pass


class EmptyQuestionPool(RagBenchError):
    pass


# --- pipeline / stores ------------------------------------------------------

class InvalidChunkParams(RagBenchError):
    pass


class DimensionMismatch(RagBenchError):
    pass


class EmptyIndex(RagBenchError):
    pass


class UnknownFileId(RagBenchError):
    pass


class BadTemplate(RagBenchError):
    pass


class DuplicateId(RagBenchError):
    pass


class NotTrained(RagBenchError):
    pass


class EmptyInput(RagBenchError):
    pass


class StageError(RagBenchError):
    """Backend failure wrapped with the pipeline stage it occurred in."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


class SnapshotError(RagBenchError):
    pass


class MissingSnapshot(RagBenchError):
    pass


# --- connectors ---------------------------------------------------------------

class RemoteTimeout(RagBenchError):
    pass


class RemoteError(RagBenchError):
    def __init__(self, status: int, body_excerpt: str = ""):
        super().__init__(f"remote returned status {status}: {body_excerpt[:200]}")
        self.status = status
        self.body_excerpt = body_excerpt[:200]


class StreamAborted(RagBenchError):
    def __init__(self, partial_text: str, cause: str = ""):
        super().__init__(f"stream aborted after {len(partial_text)} chars: {cause}")
        self.partial_text = partial_text


class Unsupported(RagBenchError):
    def __init__(self, op: str, backend: str = ""):
        super().__init__(f"operation {op!r} not supported by backend {backend!r}")
        self.op = op
        self.backend = backend


class ScrapeParseError(RagBenchError):
    def __init__(self, line_no: int, line: str):
        super().__init__(f"malformed metrics line {line_no}: {line[:120]!r}")
        self.line_no = line_no


# --- monitor ------------------------------------------------------------------

class OutputUnwritable(RagBenchError):
    pass


class ProbeUnavailable(RagBenchError):
    pass


class AllProbesUnavailable(RagBenchError):
    pass


class SecondStartRejected(RagBenchError):
    pass


class PartialFlush(RagBenchError):
    def __init__(self, report):
        super().__init__(f"flush incomplete: {report}")
        self.report = report


# --- metrics / reporting -------------------------------------------------------

class EmptySamples(RagBenchError):
    pass


class EmptyDenominator(RagBenchError):
    pass


class CorruptLog(RagBenchError):
    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message if offset is None else f"{message} (byte offset {offset})")
        self.offset = offset


class SchemaVersionMismatch(RagBenchError):
    pass


class DigestMismatch(RagBenchError):
    pass


# --- config / cli ---------------------------------------------------------------

class ConfigParseError(RagBenchError):
    pass


class SchemaError(RagBenchError):
    """Aggregate of config validation diagnostics."""

    def __init__(self, diagnostics: list):
        lines = "; ".join(str(d) for d in diagnostics)
        super().__init__(f"invalid config: {lines}")
        self.diagnostics = diagnostics


class MalformedRecord(RagBenchError):
    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no
