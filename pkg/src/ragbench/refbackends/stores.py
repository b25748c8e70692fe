"""Reference vector stores: exact flat scan, seeded IVF, and the hybrid store
with a temporary flat buffer absorbing updates between index rebuilds."""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass

import numpy as np

from ragbench.errors import DuplicateId, EmptyIndex, NotTrained, UnknownFileId
from ragbench.pipeline.model import IndexSpec

RetrievalCandidate = tuple[str, float]

KMEANS_MAX_ITER = 25
KMEANS_TOL = 1e-4


class RWLock:
    """Many readers / single writer. Writers are not starved: a waiting writer
    blocks new readers."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False
        self._writers_waiting = 0

    def acquire_read(self):
        with self._cond:
            while self._writer or self._writers_waiting:
                self._cond.wait()
            self._readers += 1

    def release_read(self):
        with self._cond:
            self._readers -= 1
            if self._readers == 0:
                self._cond.notify_all()

    def acquire_write(self):
        with self._cond:
            self._writers_waiting += 1
            while self._writer or self._readers:
                self._cond.wait()
            self._writers_waiting -= 1
            self._writer = True

    def release_write(self):
        with self._cond:
            self._writer = False
            self._cond.notify_all()

    class _Read:
        def __init__(self, lock):
            self._lock = lock

        def __enter__(self):
            self._lock.acquire_read()

        def __exit__(self, *exc):
            self._lock.release_read()

    class _Write:
        def __init__(self, lock):
            self._lock = lock

        def __enter__(self):
            self._lock.acquire_write()

        def __exit__(self, *exc):
            self._lock.release_write()

    def read(self):
        return RWLock._Read(self)

    def write(self):
        return RWLock._Write(self)


def _normalize(vec: np.ndarray) -> np.ndarray:
    norm = float(np.sqrt((vec * vec).sum()))
    return vec / norm if norm > 0.0 else vec


def _score_rows(rows: np.ndarray, query: np.ndarray, metric: str) -> np.ndarray:
    """Per-row similarity score; higher is better for both metrics.

    Computed as an explicit per-row reduction so a score is bitwise identical
    whether the row is scanned as part of the full matrix or a probed subset.
    """
    if metric == "cosine":
        return (rows * query).sum(axis=1)
    diff = rows - query
    return -np.sqrt((diff * diff).sum(axis=1))


def _top_k(ids: list[str], scores: np.ndarray, k: int) -> list[RetrievalCandidate]:
    """Top-k by descending score, ties broken by ascending chunk id."""
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    return [(ids[i], float(scores[i])) for i in order[:k]]


@dataclass
class InsertOutcome:
    rebuilt: bool = False
    rebuild_duration_s: float = 0.0


def _kmeans(matrix: np.ndarray, k: int, metric: str, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded k-means (k-means++ init, <=25 iterations, tol 1e-4 on centroid
    movement). Returns (centroids, assignment). k is clamped to len(matrix)."""
    n = len(matrix)
    k = min(k, n)
    rng = np.random.default_rng(seed)
    dim = matrix.shape[1]

    centroids = np.empty((k, dim), dtype=np.float64)
    centroids[0] = matrix[int(rng.integers(n))]
    d2 = ((matrix - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[j] = matrix[idx]
        d2 = np.minimum(d2, ((matrix - centroids[j]) ** 2).sum(axis=1))

    assign = np.zeros(n, dtype=np.int64)
    for _ in range(KMEANS_MAX_ITER):
        assign = _assign(matrix, centroids, metric)
        new_centroids = centroids.copy()
        for j in range(k):
            members = matrix[assign == j]
            if len(members) == 0:
                continue
            c = members.mean(axis=0)
            if metric == "cosine":
                c = _normalize(c)
            new_centroids[j] = c
        movement = float(np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max())
        centroids = new_centroids
        if movement < KMEANS_TOL:
            break
    assign = _assign(matrix, centroids, metric)
    return centroids, assign


def _assign(matrix: np.ndarray, centroids: np.ndarray, metric: str) -> np.ndarray:
    if metric == "cosine":
        return np.argmax(matrix @ centroids.T, axis=1)
    d2 = ((matrix[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


class IvfIndex:
    """Inverted-file index over a fixed id/vector set."""

    def __init__(self, ids: list[str], matrix: np.ndarray, nlist: int, metric: str, seed: int):
        self.ids = list(ids)
        self.matrix = matrix
        self.metric = metric
        self.nlist_requested = nlist
        self.trained = len(ids) > 0
        self.last_scanned = 0
        if self.trained:
            self.centroids, assign = _kmeans(matrix, nlist, metric, seed)
            self.lists: list[list[int]] = [[] for _ in range(len(self.centroids))]
            for row, cluster in enumerate(assign):
                self.lists[int(cluster)].append(row)
        else:
            self.centroids = np.zeros((0, matrix.shape[1] if matrix.ndim == 2 else 0))
            self.lists = []

    @classmethod
    def from_state(cls, ids: list[str], matrix: np.ndarray, centroids: np.ndarray,
                   lists: list[list[int]], metric: str) -> "IvfIndex":
        """Rehydrate a trained index from snapshot state without retraining."""
        obj = cls.__new__(cls)
        obj.ids = list(ids)
        obj.matrix = matrix
        obj.metric = metric
        obj.nlist_requested = len(centroids)
        obj.trained = len(centroids) > 0
        obj.last_scanned = 0
        obj.centroids = centroids
        obj.lists = [list(rows) for rows in lists]
        return obj

    @property
    def nlist(self) -> int:
        return len(self.centroids)

    def list_ids(self) -> list[list[str]]:
        return [[self.ids[r] for r in rows] for rows in self.lists]

    def probe(self, query: np.ndarray, nprobe: int) -> tuple[list[int], int]:
        """Row indices in the nprobe nearest centroids' lists, plus the number
        of entries visited."""
        if not self.trained:
            raise NotTrained("ivf index searched before build")
        cscores = _score_rows(self.centroids, query, self.metric)
        order = np.argsort(-cscores, kind="stable")[: max(1, min(nprobe, self.nlist))]
        rows: list[int] = []
        for c in order:
            rows.extend(self.lists[int(c)])
        return rows, len(rows)

    def search(self, query: np.ndarray, k: int, nprobe: int) -> list[RetrievalCandidate]:
        if self.metric == "cosine":
            query = _normalize(query)
        rows, scanned = self.probe(query, nprobe)
        self.last_scanned = scanned
        if not rows:
            return []
        cand = self.matrix[rows]
        scores = _score_rows(cand, query, self.metric)
        return _top_k([self.ids[r] for r in rows], scores, k)


def ivf_build(ids: list[str], vectors: np.ndarray, nlist: int, metric: str = "cosine",
              seed: int = 0) -> IvfIndex:
    if len(ids) == 0:
        raise ValueError("ivf_build requires at least one vector")
    matrix = np.asarray(vectors, dtype=np.float64)
    if metric == "cosine":
        matrix = np.stack([_normalize(v) for v in matrix])
    return IvfIndex(ids, matrix, nlist, metric, seed)


def ivf_search(index: IvfIndex, query: np.ndarray, k: int, nprobe: int) -> list[RetrievalCandidate]:
    return index.search(np.asarray(query, dtype=np.float64), k, nprobe)


class FlatStore:
    """Exact exhaustive-kNN store; the recall oracle for everything else."""

    kind = "Flat"

    def __init__(self, dim: int, metric: str = "cosine"):
        self.dim = dim
        self.metric = metric
        self._vectors: dict[str, np.ndarray] = {}
        self._lock = RWLock()
        self._ids_cache: list[str] | None = None
        self._matrix_cache: np.ndarray | None = None
        self.scanned_vectors_last_search = 0
        self.rebuild_count = 0

    def _check_dim(self, vector: np.ndarray) -> np.ndarray:
        vec = np.asarray(vector, dtype=np.float64)
        if vec.shape != (self.dim,):
            from ragbench.errors import DimensionMismatch

            raise DimensionMismatch(f"expected dim {self.dim}, got shape {vec.shape}")
        return _normalize(vec) if self.metric == "cosine" else vec

    def insert(self, chunk_id: str, vector: np.ndarray) -> InsertOutcome:
        vec = self._check_dim(vector)
        with self._lock.write():
            if chunk_id in self._vectors:
                raise DuplicateId(f"chunk id {chunk_id!r} already present")
            self._vectors[chunk_id] = vec
            self._ids_cache = None
        return InsertOutcome()

    def delete(self, chunk_id: str) -> None:
        with self._lock.write():
            if chunk_id not in self._vectors:
                raise UnknownFileId(f"chunk id {chunk_id!r} not present")
            del self._vectors[chunk_id]
            self._ids_cache = None

    def build_index(self) -> float:
        return 0.0

    @property
    def count(self) -> int:
        return len(self._vectors)

    def live_items(self) -> list[tuple[str, np.ndarray]]:
        with self._lock.read():
            return list(self._vectors.items())

    def _refresh_cache(self) -> None:
        if self._ids_cache is None:
            self._ids_cache = list(self._vectors.keys())
            self._matrix_cache = (
                np.stack(list(self._vectors.values()))
                if self._vectors
                else np.zeros((0, self.dim))
            )

    def search(self, query: np.ndarray, k: int, nprobe: int | None = None) -> list[RetrievalCandidate]:
        if k < 1:
            raise ValueError("k must be >= 1")
        query = self._check_dim(query)
        with self._lock.read():
            self._refresh_cache()
            ids, matrix = self._ids_cache, self._matrix_cache
            self.scanned_vectors_last_search = len(ids)
            if not ids:
                return []
            scores = _score_rows(matrix, query, self.metric)
            return _top_k(ids, scores, k)

    def stats(self) -> dict:
        raw = self.count * self.dim * 8
        return {
            "kind": self.kind,
            "metric": self.metric,
            "dim": self.dim,
            "count": self.count,
            "main_count": self.count,
            "buffer_count": 0,
            "tombstones": 0,
            "rebuild_count": 0,
            "trained": True,
            "raw_vector_bytes": raw,
            "index_bytes": raw + sum(len(i.encode()) for i in self._vectors),
            "scanned_vectors_last_search": self.scanned_vectors_last_search,
        }


def flat_search(store, query: np.ndarray, k: int) -> list[RetrievalCandidate]:
    """Exact top-k over a store's live vectors, regardless of store kind."""
    if k < 1:
        raise ValueError("k must be >= 1")
    items = store.live_items()
    if not items:
        return []
    query = np.asarray(query, dtype=np.float64)
    if store.metric == "cosine":
        query = _normalize(query)
    ids = [i for i, _ in items]
    matrix = np.stack([v for _, v in items])
    scores = _score_rows(matrix, query, store.metric)
    return _top_k(ids, scores, k)


class HybridStore:
    """IVF main index plus a flat update buffer.

    Inserts land in the buffer; when the buffer reaches `buffer_threshold`
    (after the initial build) the whole store retrains and the buffer drains
    into the main index. With `buffer_searchable` the buffer is linearly
    scanned at query time (immediate freshness, growing scan cost); without
    it, buffered entries stay invisible until the next rebuild.

    Deletions of main-resident ids are tombstoned and filtered at search time,
    then physically purged at the next rebuild; deletions of buffered ids are
    immediate. `scanned_vectors_last_search` counts every entry visited:
    probed main entries (tombstoned ones still cost the check) plus the
    buffer when it is searchable.
    """

    def __init__(
        self,
        dim: int,
        metric: str = "cosine",
        nlist: int = 16,
        nprobe: int = 4,
        buffer_threshold: int = 1024,
        buffer_searchable: bool = True,
        seed: int = 0,
    ):
        if buffer_threshold < 1:
            raise ValueError("buffer_threshold must be >= 1")
        self.dim = dim
        self.metric = metric
        self.nlist = nlist
        self.nprobe = nprobe
        self.buffer_threshold = buffer_threshold
        self.buffer_searchable = buffer_searchable
        self.seed = seed

        self._main: IvfIndex | None = None
        self._main_vectors: dict[str, np.ndarray] = {}
        self._tombstones: set[str] = set()
        self._buffer: dict[str, np.ndarray] = {}
        self._lock = RWLock()
        self.rebuild_count = 0
        self.scanned_vectors_last_search = 0

    @property
    def kind(self) -> str:
        return "HybridIVF" if self.buffer_searchable else "IVF"

    @property
    def trained(self) -> bool:
        return self._main is not None and self._main.trained

    @property
    def count(self) -> int:
        return len(self._main_vectors) - len(self._tombstones) + len(self._buffer)

    def _check_dim(self, vector: np.ndarray) -> np.ndarray:
        vec = np.asarray(vector, dtype=np.float64)
        if vec.shape != (self.dim,):
            from ragbench.errors import DimensionMismatch

            raise DimensionMismatch(f"expected dim {self.dim}, got shape {vec.shape}")
        return _normalize(vec) if self.metric == "cosine" else vec

    def _contains_live(self, chunk_id: str) -> bool:
        if chunk_id in self._buffer:
            return True
        return chunk_id in self._main_vectors and chunk_id not in self._tombstones

    def insert(self, chunk_id: str, vector: np.ndarray) -> InsertOutcome:
        vec = self._check_dim(vector)
        with self._lock.write():
            if self._contains_live(chunk_id):
                raise DuplicateId(f"chunk id {chunk_id!r} already present")
            self._buffer[chunk_id] = vec
            # threshold policy only applies after the initial build; bulk
            # loading would otherwise retrain once per threshold batch
            if self.trained and len(self._buffer) >= self.buffer_threshold:
                duration = self._rebuild_locked()
                self.rebuild_count += 1
                return InsertOutcome(rebuilt=True, rebuild_duration_s=duration)
        return InsertOutcome()

    def delete(self, chunk_id: str) -> None:
        with self._lock.write():
            if chunk_id in self._buffer:
                del self._buffer[chunk_id]
                return
            if chunk_id in self._main_vectors and chunk_id not in self._tombstones:
                self._tombstones.add(chunk_id)
                return
            raise UnknownFileId(f"chunk id {chunk_id!r} not present")

    def _rebuild_locked(self) -> float:
        start = time.perf_counter()
        live = {
            cid: vec
            for cid, vec in self._main_vectors.items()
            if cid not in self._tombstones
        }
        live.update(self._buffer)
        self._main_vectors = live
        self._tombstones = set()
        self._buffer = {}
        if live:
            ids = list(live.keys())
            matrix = np.stack([live[i] for i in ids])
            self._main = IvfIndex(ids, matrix, self.nlist, self.metric, self.seed)
        else:
            self._main = None
        return time.perf_counter() - start

    def build_index(self) -> float:
        """Initial (or forced) full build: drains the buffer into main.

        Explicit builds do not count as buffer-triggered rebuilds."""
        with self._lock.write():
            return self._rebuild_locked()

    def search(self, query: np.ndarray, k: int, nprobe: int | None = None) -> list[RetrievalCandidate]:
        if k < 1:
            raise ValueError("k must be >= 1")
        query = self._check_dim(query)
        nprobe = self.nprobe if nprobe is None else nprobe
        with self._lock.read():
            if self.count == 0:
                raise EmptyIndex("store holds no live vectors")
            ids: list[str] = []
            rows_list: list[np.ndarray] = []
            scanned = 0
            if self._main is not None and self._main.trained:
                rows, visited = self._main.probe(query, nprobe)
                scanned += visited
                live_rows = [r for r in rows if self._main.ids[r] not in self._tombstones]
                if live_rows:
                    ids.extend(self._main.ids[r] for r in live_rows)
                    rows_list.append(self._main.matrix[live_rows])
            if self.buffer_searchable and self._buffer:
                scanned += len(self._buffer)
                ids.extend(self._buffer.keys())
                rows_list.append(np.stack(list(self._buffer.values())))
            self.scanned_vectors_last_search = scanned
            if not ids:
                return []
            matrix = np.concatenate(rows_list, axis=0)
            scores = _score_rows(matrix, query, self.metric)
            return _top_k(ids, scores, k)

    def live_items(self) -> list[tuple[str, np.ndarray]]:
        with self._lock.read():
            items = [
                (cid, vec)
                for cid, vec in self._main_vectors.items()
                if cid not in self._tombstones
            ]
            items.extend(self._buffer.items())
            return items

    def live_ids(self) -> set[str]:
        return {cid for cid, _ in self.live_items()}

    def stats(self) -> dict:
        with self._lock.read():
            main_live = len(self._main_vectors) - len(self._tombstones)
            raw = self.count * self.dim * 8
            centroid_bytes = (
                self._main.centroids.nbytes if self._main is not None else 0
            )
            id_bytes = sum(len(i.encode()) for i in self._main_vectors)
            id_bytes += sum(len(i.encode()) for i in self._buffer)
            return {
                "kind": self.kind,
                "metric": self.metric,
                "dim": self.dim,
                "count": self.count,
                "main_count": main_live,
                "buffer_count": len(self._buffer),
                "tombstones": len(self._tombstones),
                "rebuild_count": self.rebuild_count,
                "trained": self.trained,
                "raw_vector_bytes": raw,
                "index_bytes": len(self._main_vectors) * self.dim * 8
                + len(self._buffer) * self.dim * 8
                + centroid_bytes
                + id_bytes,
                "scanned_vectors_last_search": self.scanned_vectors_last_search,
                "nlist": self.nlist,
                "nprobe": self.nprobe,
                "buffer_threshold": self.buffer_threshold,
            }


def hybrid_insert(store: HybridStore, chunk_id: str, vector: np.ndarray) -> InsertOutcome:
    return store.insert(chunk_id, vector)


def hybrid_search(store: HybridStore, query: np.ndarray, k: int, nprobe: int | None = None):
    return store.search(query, k, nprobe)


def make_store(spec: IndexSpec, dim: int, seed: int = 0):
    """Instantiate a reference store for an index spec."""
    spec.validate()
    if spec.kind == "Flat":
        return FlatStore(dim, spec.metric)
    return HybridStore(
        dim,
        metric=spec.metric,
        nlist=spec.nlist,
        nprobe=spec.nprobe,
        buffer_threshold=spec.buffer_threshold,
        buffer_searchable=(spec.kind == "HybridIVF"),
        seed=seed,
    )
