"""Binary snapshot format for reference stores.

Layout (all integers little-endian, fixed width):

    magic "RGBS" | u16 version | u32 dim | u8 metric | u8 kind
    u32 nlist | u32 nprobe | u32 buffer_threshold | i64 seed
    4 sections, each: u64 payload length, then payload
        centroids:  u32 count, count * dim * f64
        lists:      u32 nlists, per list u32 n, n * entry
        buffer:     u32 n, n * entry
        tombstones: u32 n, per id: u16 len, bytes

    entry = u16 id length | id bytes | dim * f64
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ragbench.errors import SnapshotError
from ragbench.refbackends.stores import FlatStore, HybridStore, IvfIndex

MAGIC = b"RGBS"
VERSION = 1
_METRICS = ("cosine", "l2")
_KINDS = ("Flat", "IVF", "HybridIVF")


def _pack_entry(chunk_id: str, vector: np.ndarray) -> bytes:
    ident = chunk_id.encode("utf-8")
    return struct.pack("<H", len(ident)) + ident + vector.astype("<f8").tobytes()


def _unpack_entry(buf: bytes, off: int, dim: int) -> tuple[str, np.ndarray, int]:
    (id_len,) = struct.unpack_from("<H", buf, off)
    off += 2
    ident = buf[off:off + id_len].decode("utf-8")
    off += id_len
    vec = np.frombuffer(buf, dtype="<f8", count=dim, offset=off).astype(np.float64)
    off += dim * 8
    return ident, vec, off


def save_store(store, path: str | Path) -> int:
    """Serialize a FlatStore or HybridStore; returns bytes written."""
    if isinstance(store, FlatStore):
        kind, nlist, nprobe, threshold, seed = "Flat", 1, 1, 1, 0
        centroids = np.zeros((0, store.dim))
        lists = [store.live_items()]
        buffer: list[tuple[str, np.ndarray]] = []
        tombstones: list[str] = []
    elif isinstance(store, HybridStore):
        kind = store.kind
        nlist, nprobe = store.nlist, store.nprobe
        threshold, seed = store.buffer_threshold, store.seed
        main = store._main
        if main is not None and main.trained:
            centroids = main.centroids
            lists = [[(main.ids[r], main.matrix[r]) for r in rows] for rows in main.lists]
        else:
            centroids = np.zeros((0, store.dim))
            lists = []
        buffer = list(store._buffer.items())
        tombstones = sorted(store._tombstones)
    else:
        raise SnapshotError(f"cannot snapshot store type {type(store).__name__}")

    header = MAGIC + struct.pack(
        "<HIBBIIIq",
        VERSION,
        store.dim,
        _METRICS.index(store.metric),
        _KINDS.index(kind),
        nlist,
        nprobe,
        threshold,
        seed,
    )

    centroid_payload = struct.pack("<I", len(centroids)) + centroids.astype("<f8").tobytes()
    lists_payload = struct.pack("<I", len(lists))
    for entries in lists:
        lists_payload += struct.pack("<I", len(entries))
        for cid, vec in entries:
            lists_payload += _pack_entry(cid, vec)
    buffer_payload = struct.pack("<I", len(buffer))
    for cid, vec in buffer:
        buffer_payload += _pack_entry(cid, vec)
    tomb_payload = struct.pack("<I", len(tombstones))
    for cid in tombstones:
        ident = cid.encode("utf-8")
        tomb_payload += struct.pack("<H", len(ident)) + ident

    blob = header
    for payload in (centroid_payload, lists_payload, buffer_payload, tomb_payload):
        blob += struct.pack("<Q", len(payload)) + payload
    Path(path).write_bytes(blob)
    return len(blob)


def load_store(path: str | Path):
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise SnapshotError(f"bad snapshot magic {buf[:4]!r}")
    off = 4
    version, dim, metric_i, kind_i, nlist, nprobe, threshold, seed = struct.unpack_from(
        "<HIBBIIIq", buf, off
    )
    off += struct.calcsize("<HIBBIIIq")
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    metric = _METRICS[metric_i]
    kind = _KINDS[kind_i]

    sections = []
    for _ in range(4):
        (length,) = struct.unpack_from("<Q", buf, off)
        off += 8
        sections.append(buf[off:off + length])
        if len(sections[-1]) != length:
            raise SnapshotError("snapshot truncated")
        off += length
    centroid_sec, lists_sec, buffer_sec, tomb_sec = sections

    (c_count,) = struct.unpack_from("<I", centroid_sec, 0)
    centroids = np.frombuffer(centroid_sec, dtype="<f8", count=c_count * dim, offset=4)
    centroids = centroids.reshape(c_count, dim).astype(np.float64) if c_count else np.zeros((0, dim))

    (n_lists,) = struct.unpack_from("<I", lists_sec, 0)
    pos = 4
    lists: list[list[tuple[str, np.ndarray]]] = []
    for _ in range(n_lists):
        (n,) = struct.unpack_from("<I", lists_sec, pos)
        pos += 4
        entries = []
        for _ in range(n):
            cid, vec, pos = _unpack_entry(lists_sec, pos, dim)
            entries.append((cid, vec))
        lists.append(entries)

    (n_buf,) = struct.unpack_from("<I", buffer_sec, 0)
    pos = 4
    buffer = []
    for _ in range(n_buf):
        cid, vec, pos = _unpack_entry(buffer_sec, pos, dim)
        buffer.append((cid, vec))

    (n_tomb,) = struct.unpack_from("<I", tomb_sec, 0)
    pos = 4
    tombstones = []
    for _ in range(n_tomb):
        (id_len,) = struct.unpack_from("<H", tomb_sec, pos)
        pos += 2
        tombstones.append(tomb_sec[pos:pos + id_len].decode("utf-8"))
        pos += id_len

    if kind == "Flat":
        store = FlatStore(dim, metric)
        # restore verbatim: snapshot vectors are already normalized
        for entries in lists:
            for cid, vec in entries:
                store._vectors[cid] = vec
        return store

    store = HybridStore(
        dim,
        metric=metric,
        nlist=nlist,
        nprobe=nprobe,
        buffer_threshold=threshold,
        buffer_searchable=(kind == "HybridIVF"),
        seed=seed,
    )
    flat_entries = [e for entries in lists for e in entries]
    if flat_entries:
        ids = [cid for cid, _ in flat_entries]
        matrix = np.stack([vec for _, vec in flat_entries])
        row_lists: list[list[int]] = []
        row = 0
        for entries in lists:
            row_lists.append(list(range(row, row + len(entries))))
            row += len(entries)
        store._main = IvfIndex.from_state(ids, matrix, centroids, row_lists, metric)
        store._main_vectors = dict(zip(ids, matrix))
    store._buffer = dict(buffer)
    store._tombstones = set(tombstones)
    return store
