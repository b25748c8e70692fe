"""Self-describing binary trace format.

    header  = magic "RGBT" | u16 version | u16 flags | u64 wall epoch ns
              | u16 metric count | per metric: u16 id, u8 name len, name bytes
    records = repeated { u16 metric id | u64 monotonic ns | f64 value }
    footer  = magic "RGBF" | u64 samples_written | u64 samples_dropped

Everything little-endian. Records are fixed 18 bytes, so a truncated file
(missing footer) still parses by arithmetic and is flagged incomplete.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

from ragbench.errors import CorruptLog

HEADER_MAGIC = b"RGBT"
FOOTER_MAGIC = b"RGBF"
VERSION = 1
RECORD_SIZE = 18
FOOTER_SIZE = 4 + 8 + 8

# Reserved name-table id carrying run/config annotation; never used by records.
ANNOTATION_ID = 0xFFFF


def pack_record(metric_id: int, ts_ns: int, value: float) -> bytes:
    return struct.pack("<HQd", metric_id, ts_ns, value)


def unpack_record(buf: bytes, offset: int) -> tuple[int, int, float]:
    return struct.unpack_from("<HQd", buf, offset)


class TraceWriter:
    """Single-owner trace file writer: header up front, records appended,
    footer written exactly once at finalize."""

    def __init__(self, path: str | Path, metric_names: dict[int, str],
                 epoch_ns: int, flags: int = 0, annotation: str | None = None):
        self.path = Path(path)
        self._fh = open(self.path, "wb")
        table = dict(metric_names)
        if annotation is not None:
            table[ANNOTATION_ID] = annotation
        header = HEADER_MAGIC + struct.pack("<HHQ", VERSION, flags, epoch_ns)
        header += struct.pack("<H", len(table))
        for mid, name in sorted(table.items()):
            raw = name.encode("utf-8")[:255]
            header += struct.pack("<HB", mid, len(raw)) + raw
        self._fh.write(header)
        self._fh.flush()
        self._finalized = False
        self.bytes_written = len(header)

    def append(self, data: bytes) -> None:
        if self._finalized:
            raise CorruptLog("append after finalize")
        self._fh.write(data)
        self.bytes_written += len(data)

    def flush(self) -> None:
        self._fh.flush()

    def finalize(self, samples_written: int, samples_dropped: int) -> int:
        if self._finalized:
            return self.bytes_written
        footer = FOOTER_MAGIC + struct.pack("<QQ", samples_written, samples_dropped)
        self._fh.write(footer)
        self.bytes_written += len(footer)
        self._fh.flush()
        self._fh.close()
        self._finalized = True
        return self.bytes_written


@dataclass
class TraceData:
    epoch_ns: int
    flags: int
    names: dict[int, str]
    records: list[tuple[int, int, float]]
    samples_written: int | None = None
    samples_dropped: int | None = None
    complete: bool = False
    annotation: str | None = None
    consistent: bool = True

    def by_metric(self) -> dict[str, list[tuple[int, float]]]:
        out: dict[str, list[tuple[int, float]]] = {}
        for mid, ts, value in self.records:
            name = self.names.get(mid, f"metric_{mid}")
            out.setdefault(name, []).append((ts, value))
        return out


def parse_trace(path: str | Path) -> TraceData:
    buf = Path(path).read_bytes()
    if len(buf) < 4 or buf[:4] != HEADER_MAGIC:
        raise CorruptLog(f"bad trace magic in {path}", offset=0)
    off = 4
    try:
        version, flags, epoch_ns = struct.unpack_from("<HHQ", buf, off)
        off += 12
        (count,) = struct.unpack_from("<H", buf, off)
        off += 2
        names: dict[int, str] = {}
        for _ in range(count):
            mid, nlen = struct.unpack_from("<HB", buf, off)
            off += 3
            names[mid] = buf[off:off + nlen].decode("utf-8")
            off += nlen
    except (struct.error, UnicodeDecodeError) as exc:
        raise CorruptLog(f"corrupt trace header: {exc}", offset=off) from exc
    if version != VERSION:
        raise CorruptLog(f"unsupported trace version {version}", offset=4)

    annotation = names.pop(ANNOTATION_ID, None)

    body = buf[off:]
    complete = len(body) >= FOOTER_SIZE and body[-FOOTER_SIZE:-16] == FOOTER_MAGIC
    samples_written = samples_dropped = None
    if complete:
        samples_written, samples_dropped = struct.unpack("<QQ", body[-16:])
        body = body[:-FOOTER_SIZE]

    n_records = len(body) // RECORD_SIZE
    records = [unpack_record(body, i * RECORD_SIZE) for i in range(n_records)]
    consistent = True
    if len(body) % RECORD_SIZE != 0:
        consistent = False
    if complete and samples_written != n_records:
        consistent = False

    return TraceData(
        epoch_ns=epoch_ns,
        flags=flags,
        names=names,
        records=records,
        samples_written=samples_written,
        samples_dropped=samples_dropped,
        complete=complete,
        annotation=annotation,
        consistent=consistent,
    )
